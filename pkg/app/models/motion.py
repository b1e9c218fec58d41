import enum
from dataclasses import dataclass
from typing import List

import numpy as np

from app.exceptions import InvalidArgumentError


class MotionState(str, enum.Enum):
    STATIC = "static"
    TURNING = "turning"
    LINEAR = "linear"

    @property
    def code(self) -> str:
        """One-letter label used in reports (S/T/L)"""
        return self.value[0].upper()


@dataclass(frozen=True, eq=False)
class FlowField:
    """Dense optical flow of one frame, row-major (height, width) grids"""

    width: int
    height: int
    fx: np.ndarray
    fy: np.ndarray

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvalidArgumentError("flow field is empty")
        fx = np.asarray(self.fx, dtype=float).reshape(-1)
        fy = np.asarray(self.fy, dtype=float).reshape(-1)
        expected = self.width * self.height
        if fx.size != expected or fy.size != expected:
            raise InvalidArgumentError(
                f"flow field expects {expected} entries per component, got {fx.size} and {fy.size}"
            )
        if not (np.all(np.isfinite(fx)) and np.all(np.isfinite(fy))):
            raise InvalidArgumentError("flow field contains non-finite entries")
        object.__setattr__(self, "fx", fx.reshape(self.height, self.width))
        object.__setattr__(self, "fy", fy.reshape(self.height, self.width))

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.fx, self.fy)


@dataclass(frozen=True, eq=False)
class MotionProfile:
    static_ratio: np.ndarray
    turning_score: np.ndarray
    smoothed_static: np.ndarray
    smoothed_turn: np.ndarray
    states: List[MotionState]

    def __post_init__(self):
        n = len(self.states)
        for name in ("static_ratio", "turning_score", "smoothed_static", "smoothed_turn"):
            series = np.asarray(getattr(self, name), dtype=float)
            if series.shape != (n,):
                raise InvalidArgumentError(f"{name} has length {series.size}, expected {n}")
            object.__setattr__(self, name, series)
        if np.any((self.static_ratio < 0) | (self.static_ratio > 1)):
            raise InvalidArgumentError("static ratios must lie in [0, 1]")
        if np.any(self.turning_score < 0):
            raise InvalidArgumentError("turning scores must be non-negative")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def state_codes(self) -> str:
        return "".join(s.code for s in self.states)
