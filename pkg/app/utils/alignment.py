import numpy as np
from typing import Optional

from app.exceptions import DegenerateGeometryError, InvalidArgumentError
from app.models.sim3 import Sim3

# singular values below this fraction of the largest count as zero
RANK_TOL = 1e-12


def weighted_umeyama(
    src: np.ndarray,
    dst: np.ndarray,
    weights: Optional[np.ndarray] = None,
    min_rank: int = 2,
) -> Sim3:
    """
    Closed-form minimiser of sum_u w_u |s R src_u + t - dst_u|^2.

    Weighted centroids, weighted cross-covariance SVD with the det-sign
    correction, scale from the variance ratio. `min_rank` is the smallest
    accepted rank of the cross-covariance: 2 for general registration, 1
    when only positions matter (collinear trajectories).
    """
    src = np.asarray(src, dtype=float).reshape(-1, 3)
    dst = np.asarray(dst, dtype=float).reshape(-1, 3)
    if src.shape != dst.shape:
        raise InvalidArgumentError(f"src and dst differ in shape: {src.shape} vs {dst.shape}")
    n = src.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != n:
        raise InvalidArgumentError(f"expected {n} weights, got {w.shape[0]}")
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise InvalidArgumentError("weights must be finite and non-negative")
    if n < 3:
        raise DegenerateGeometryError(f"need at least 3 points, got {n}")

    total = w.sum()
    if total <= 0:
        raise DegenerateGeometryError("total weight is zero")
    wn = w / total
    active = wn > 0
    if not (np.all(np.isfinite(src[active])) and np.all(np.isfinite(dst[active]))):
        raise InvalidArgumentError("weighted points must be finite")
    src, dst, wn = src[active], dst[active], wn[active]

    mu_src = wn @ src
    mu_dst = wn @ dst
    xs = src - mu_src
    yd = dst - mu_dst
    var_src = float(wn @ np.einsum("ij,ij->i", xs, xs))
    if var_src <= 1e-24 * max(1.0, float(mu_src @ mu_src)):
        raise DegenerateGeometryError(f"source variance {var_src:.3e} is too small")

    cov = (yd * wn[:, None]).T @ xs
    U, D, Vt = np.linalg.svd(cov)
    rank = int(np.sum(D > RANK_TOL * D[0])) if D[0] > 0 else 0
    if rank < min_rank:
        raise DegenerateGeometryError(f"cross-covariance has rank {rank} < {min_rank}")

    signs = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        signs[2] = -1.0
    R = (U * signs) @ Vt
    scale = float(np.sum(D * signs) / var_src)
    if scale <= 0:
        raise DegenerateGeometryError(f"non-positive scale {scale:.3e}")
    t = mu_dst - scale * R @ mu_src
    return Sim3(scale, R, t)
