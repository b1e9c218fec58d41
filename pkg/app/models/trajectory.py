import enum
from dataclasses import dataclass
from typing import Iterable, List

import numpy as np

from app.exceptions import InvalidArgumentError
from app.models.sim3 import Sim3
from app.utils import lie


class TrajectoryFormat(str, enum.Enum):
    TUM = "tum"
    KITTI = "kitti"


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Timestamped rigid poses (camera-to-world)"""

    timestamps: np.ndarray
    rotations: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        timestamps = np.asarray(self.timestamps, dtype=float).reshape(-1)
        rotations = np.asarray(self.rotations, dtype=float).reshape(-1, 3, 3)
        positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        n = timestamps.size
        if rotations.shape[0] != n or positions.shape[0] != n:
            raise InvalidArgumentError("trajectory arrays differ in length")
        if np.any(np.diff(timestamps) <= 0):
            raise InvalidArgumentError("trajectory timestamps must be strictly increasing")
        for name, value in (("timestamps", timestamps), ("rotations", rotations), ("positions", positions)):
            lie.check_finite(name, value)
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "rotations", rotations)
        object.__setattr__(self, "positions", positions)

    @classmethod
    def from_poses(cls, timestamps: Iterable[float], poses: Iterable[Sim3]) -> "Trajectory":
        """Scale of each pose is dropped: the rotation is kept and the translation becomes the position"""
        poses = list(poses)
        if not poses:
            return cls(np.zeros(0), np.zeros((0, 3, 3)), np.zeros((0, 3)))
        return cls(
            np.asarray(list(timestamps), dtype=float),
            np.stack([p.rotation for p in poses]),
            np.stack([p.translation for p in poses]),
        )

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def pose(self, index: int) -> Sim3:
        return Sim3(1.0, self.rotations[index], self.positions[index])

    def poses(self) -> List[Sim3]:
        return [self.pose(i) for i in range(len(self))]

    def matrices(self) -> np.ndarray:
        M = np.tile(np.eye(4), (len(self), 1, 1))
        M[:, :3, :3] = self.rotations
        M[:, :3, 3] = self.positions
        return M

    def transformed(self, S: Sim3) -> "Trajectory":
        """Left-apply a similarity: positions are scaled, orientations rotated"""
        return Trajectory(
            self.timestamps,
            S.rotation @ self.rotations,
            S.apply(self.positions) if len(self) else self.positions,
        )

    def path_lengths(self) -> np.ndarray:
        """Cumulative travelled distance at each pose"""
        if len(self) == 0:
            return np.zeros(0)
        steps = np.linalg.norm(np.diff(self.positions, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(steps)])

    def subset(self, indices: np.ndarray) -> "Trajectory":
        indices = np.asarray(indices, dtype=int)
        return Trajectory(self.timestamps[indices], self.rotations[indices], self.positions[indices])
