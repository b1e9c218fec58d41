from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from app.exceptions import InvalidArgumentError
from app.utils import lie


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Sim3:
    """Similarity transform x -> s R x + t"""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        scale = float(self.scale)
        rotation = np.asarray(self.rotation, dtype=float)
        translation = np.asarray(self.translation, dtype=float).reshape(-1)
        if rotation.shape != (3, 3) or translation.shape != (3,):
            raise InvalidArgumentError("Sim3 needs a 3x3 rotation and a 3-vector translation")
        if not np.isfinite(scale) or scale <= 0:
            raise InvalidArgumentError(f"Sim3 scale must be positive and finite, got {scale}")
        lie.check_finite("rotation", rotation)
        lie.check_finite("translation", translation)
        error = lie.orthonormality_error(rotation)
        if error > lie.ORTHONORMAL_TOL or np.linalg.det(rotation) < 0:
            raise InvalidArgumentError(f"rotation is not in SO(3) (orthonormality error {error:.3e})")
        if error > 1e-12:
            rotation = lie.project_to_rotation(rotation)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "rotation", _frozen(rotation))
        object.__setattr__(self, "translation", _frozen(translation))

    # Constructors
    @classmethod
    def identity(cls) -> "Sim3":
        return cls(1.0, np.eye(3), np.zeros(3))

    @classmethod
    def exp(cls, xi: Sequence[float]) -> "Sim3":
        s, R, t = lie.sim3_exp(np.asarray(xi, dtype=float).reshape(7))
        return cls(float(s), R, t)

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "Sim3":
        M = np.asarray(M, dtype=float)
        sR = M[:3, :3]
        s = float(np.cbrt(np.linalg.det(sR)))
        return cls(s, sR / s, M[:3, 3])

    @classmethod
    def from_quaternion(cls, quat_xyzw: Sequence[float], translation: Sequence[float], scale: float = 1.0) -> "Sim3":
        R = Rotation.from_quat(np.asarray(quat_xyzw, dtype=float)).as_matrix()
        return cls(scale, R, translation)

    @classmethod
    def from_arrays(cls, arrays: lie.Sim3Arrays) -> "Sim3":
        s, R, t = arrays
        return cls(float(s), R, t)

    # Group operations
    def log(self) -> np.ndarray:
        return lie.sim3_log(np.asarray(self.scale), self.rotation, self.translation)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lie.check_finite("point", x)
        return lie.sim3_act(self.arrays, x)

    def compose(self, other: "Sim3") -> "Sim3":
        return Sim3.from_arrays(lie.sim3_compose(self.arrays, other.arrays))

    def inverse(self) -> "Sim3":
        return Sim3.from_arrays(lie.sim3_inverse(self.arrays))

    def __matmul__(self, other: "Sim3") -> "Sim3":
        return self.compose(other)

    # Views
    @property
    def arrays(self) -> lie.Sim3Arrays:
        return np.asarray(self.scale), self.rotation, self.translation

    @property
    def rotation_angle(self) -> float:
        return float(lie.so3_angle(self.rotation))

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.scale * self.rotation
        M[:3, 3] = self.translation
        return M

    def as_quaternion(self) -> np.ndarray:
        """Rotation as (qx, qy, qz, qw)"""
        return Rotation.from_matrix(self.rotation).as_quat()

    def is_close(self, other: "Sim3", tol: float = 1e-9) -> bool:
        return (
            abs(self.scale - other.scale) <= tol
            and np.allclose(self.rotation, other.rotation, atol=tol, rtol=0)
            and np.allclose(self.translation, other.translation, atol=tol, rtol=0)
        )

    def __repr__(self) -> str:
        return (
            f"Sim3(s={self.scale:.6g}, angle={self.rotation_angle:.6g}, "
            f"t={np.array2string(self.translation, precision=6)})"
        )


def sim3_exp(xi: Sequence[float]) -> Sim3:
    """Exponential map of a [rho | phi | sigma] tangent"""
    return Sim3.exp(xi)


def sim3_log(S: Sim3) -> np.ndarray:
    return S.log()


def sim3_apply(S: Sim3, x: np.ndarray) -> np.ndarray:
    return S.apply(x)


def sim3_compose(A: Sim3, B: Sim3) -> Sim3:
    return A.compose(B)


def sim3_inverse(S: Sim3) -> Sim3:
    return S.inverse()
