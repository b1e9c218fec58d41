import enum
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from app.models.sim3 import Sim3


class AnchorKind(str, enum.Enum):
    OVERLAP = "overlap"
    LOOP = "loop"


class EdgeKind(str, enum.Enum):
    ODOMETRY = "odometry"
    LOOP = "loop"


@dataclass(frozen=True)
class AnchorSpec:
    kind: AnchorKind
    frames: Tuple[int, ...]


@dataclass(frozen=True, eq=False)
class ValidMask:
    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def count(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True, eq=False)
class RegistrationResult:
    transform: Sim3
    inlier_ratio: float
    iterations: int
    cost_history: List[float] = field(default_factory=list)
    residual_evaluations: int = 0
    n_valid: int = 0


@dataclass(frozen=True, eq=False)
class Sim3Edge:
    """Relative constraint: `transform` maps submap `to_submap` coordinates into `from_submap`"""

    from_submap: int
    to_submap: int
    transform: Sim3
    inlier_ratio: float
    kind: EdgeKind = EdgeKind.ODOMETRY
    accepted: bool = False
    anchor_frames: Tuple[int, ...] = ()

    @property
    def weight(self) -> float:
        return float(self.inlier_ratio)
