"""
Batched SO(3) / Sim(3) arithmetic on numpy arrays.

A Sim(3) element is carried as the triple (s, R, t) with shapes (...,),
(..., 3, 3) and (..., 3); tangent vectors are (..., 7) ordered
[rho | phi | sigma] (translation, axis-angle rotation, log-scale).
Every function broadcasts over the leading dimensions so the pose graph
can evaluate all edges in one call.
"""
from typing import Tuple

import numpy as np

from app.exceptions import DomainError, InvalidArgumentError

Sim3Arrays = Tuple[np.ndarray, np.ndarray, np.ndarray]

SMALL_ANGLE = 1e-2
LOG_ANGLE_LIMIT = np.pi - 1e-6
ORTHONORMAL_TOL = 1e-9

# moments M_n(sigma) = int_0^1 t^n e^(sigma t) dt are summed to this many terms
_MOMENT_TERMS = 60


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector, batched"""
    v = np.asarray(v, dtype=float)
    K = np.zeros(v.shape[:-1] + (3, 3))
    K[..., 0, 1] = -v[..., 2]
    K[..., 0, 2] = v[..., 1]
    K[..., 1, 0] = v[..., 2]
    K[..., 1, 2] = -v[..., 0]
    K[..., 2, 0] = -v[..., 1]
    K[..., 2, 1] = v[..., 0]
    return K


def vee(K: np.ndarray) -> np.ndarray:
    return np.stack([K[..., 2, 1], K[..., 0, 2], K[..., 1, 0]], axis=-1)


def check_finite(name: str, value: np.ndarray) -> None:
    if not np.all(np.isfinite(value)):
        raise InvalidArgumentError(f"{name} contains non-finite values")


def so3_exp(phi: np.ndarray) -> np.ndarray:
    """Rodrigues formula"""
    phi = np.asarray(phi, dtype=float)
    theta2 = np.sum(phi * phi, axis=-1)
    theta = np.sqrt(theta2)
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    A = np.where(small, 1.0 - theta2 / 6.0, np.sin(safe) / safe)
    half = np.where(small, 1.0, np.sin(0.5 * safe) / (0.5 * safe))
    B = np.where(small, 0.5 - theta2 / 24.0, 0.5 * half * half)
    K = hat(phi)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + A[..., None, None] * K + B[..., None, None] * (K @ K)


def so3_angle(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    cos = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    sin = np.linalg.norm(0.5 * vee(R - np.swapaxes(R, -1, -2)), axis=-1)
    return np.arctan2(sin, cos)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation; angles at or beyond pi - 1e-6 are rejected"""
    R = np.asarray(R, dtype=float)
    w = 0.5 * vee(R - np.swapaxes(R, -1, -2))
    sin = np.linalg.norm(w, axis=-1)
    cos = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(sin, cos)
    if np.any(theta >= LOG_ANGLE_LIMIT):
        raise DomainError(
            f"rotation angle {float(np.max(theta)):.9f} rad is too close to pi for the log map"
        )
    small = theta < 1e-8
    factor = np.where(small, 1.0 + theta * theta / 6.0, theta / np.where(small, 1.0, sin))
    return factor[..., None] * w


def _moments(sigma: np.ndarray, orders: Tuple[int, ...]) -> dict:
    """Series for M_n(sigma) = int_0^1 t^n e^(sigma t) dt"""
    sigma = np.asarray(sigma, dtype=float)
    m = np.arange(_MOMENT_TERMS)
    # sigma^m / m!
    ratios = sigma[None] / m[1:].reshape((-1,) + (1,) * sigma.ndim)
    terms = np.concatenate([np.ones((1,) + sigma.shape), np.cumprod(ratios, axis=0)])
    return {n: np.tensordot(1.0 / (n + m + 1.0), terms, axes=1) for n in orders}


def sim3_w_coefficients(theta: np.ndarray, sigma: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coefficients (a, b, c) with W = a I + b hat(phi) + c hat(phi)^2"""
    theta = np.asarray(theta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    tiny_sigma = np.abs(sigma) < 1e-12
    a = np.where(tiny_sigma, 1.0 + 0.5 * sigma, np.expm1(sigma) / np.where(tiny_sigma, 1.0, sigma))

    small = theta < SMALL_ANGLE
    th = np.where(small, 1.0, theta)
    es = np.exp(sigma)
    denom = sigma * sigma + th * th
    int_sin = (es * (sigma * np.sin(th) - th * np.cos(th)) + th) / denom
    int_cos = (es * (sigma * np.cos(th) + th * np.sin(th)) - sigma) / denom
    b = int_sin / th
    c = (a - int_cos) / (th * th)

    if np.any(small):
        M = _moments(sigma, (1, 2, 3, 4, 5, 6))
        t2 = theta * theta
        b_small = M[1] - t2 / 6.0 * M[3] + t2 * t2 / 120.0 * M[5]
        c_small = M[2] / 2.0 - t2 / 24.0 * M[4] + t2 * t2 / 720.0 * M[6]
        b = np.where(small, b_small, b)
        c = np.where(small, c_small, c)
    return a, b, c


def sim3_w_matrix(phi: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)
    a, b, c = sim3_w_coefficients(theta, sigma)
    K = hat(phi)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return a[..., None, None] * eye + b[..., None, None] * K + c[..., None, None] * (K @ K)


def sim3_exp(xi: np.ndarray) -> Sim3Arrays:
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != 7:
        raise InvalidArgumentError(f"Sim(3) tangent must have 7 components, got {xi.shape[-1]}")
    check_finite("tangent", xi)
    rho, phi, sigma = xi[..., 0:3], xi[..., 3:6], xi[..., 6]
    W = sim3_w_matrix(phi, sigma)
    t = np.einsum("...ij,...j->...i", W, rho)
    return np.exp(sigma), so3_exp(phi), t


def sim3_log(s: np.ndarray, R: np.ndarray, t: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if np.any(~np.isfinite(s)) or np.any(s <= 0):
        raise InvalidArgumentError("Sim(3) scale must be positive and finite")
    phi = so3_log(R)
    sigma = np.log(s)
    W = sim3_w_matrix(phi, sigma)
    rho = np.linalg.solve(W, np.asarray(t, dtype=float)[..., None])[..., 0]
    return np.concatenate([rho, phi, sigma[..., None]], axis=-1)


def sim3_compose(a: Sim3Arrays, b: Sim3Arrays) -> Sim3Arrays:
    s1, R1, t1 = a
    s2, R2, t2 = b
    t = t1 + np.asarray(s1)[..., None] * np.einsum("...ij,...j->...i", R1, t2)
    return s1 * s2, R1 @ R2, t


def sim3_inverse(a: Sim3Arrays) -> Sim3Arrays:
    s, R, t = a
    Rt = np.swapaxes(R, -1, -2)
    inv_s = 1.0 / np.asarray(s)
    return inv_s, Rt, -inv_s[..., None] * np.einsum("...ij,...j->...i", Rt, t)


def sim3_act(a: Sim3Arrays, x: np.ndarray) -> np.ndarray:
    """s R x + t for points x of shape (..., 3) under one transform"""
    s, R, t = a
    return float(s) * (np.asarray(x, dtype=float) @ np.asarray(R).T) + np.asarray(t)


def project_to_rotation(M: np.ndarray) -> np.ndarray:
    """Nearest proper rotation in the Frobenius sense"""
    U, _, Vt = np.linalg.svd(M)
    D = np.ones(M.shape[:-1])
    D[..., -1] = np.sign(np.linalg.det(U @ Vt))
    return (U * D[..., None, :]) @ Vt


def orthonormality_error(R: np.ndarray) -> float:
    R = np.asarray(R, dtype=float)
    return float(np.max(np.abs(R @ np.swapaxes(R, -1, -2) - np.eye(3))))
