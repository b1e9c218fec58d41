import enum
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import pandas as pd

from app.exceptions import DataIntegrityError, InvalidArgumentError
from app.models.motion import MotionState
from app.models.sim3 import Sim3


class ContextRole(str, enum.Enum):
    PRECEDING = "preceding"
    SUCCEEDING = "succeeding"
    LOOP_HISTORICAL = "loop_historical"


FLOW_STAT_COLUMNS = ["frame_index", "mean_flow_mag", "static_ratio_raw", "turning_score_raw"]


@dataclass(frozen=True, eq=False)
class SubmapGeometry:
    """
    Output of a geometry provider for one submap context.

    points: (F, H, W, 3) submap-local point maps, confidences: (F, H, W),
    sky: (F, H, W) booleans, poses: one local camera pose per frame.
    """

    submap_id: int
    role: ContextRole
    frames: Tuple[int, ...]
    points: np.ndarray
    confidences: np.ndarray
    sky: np.ndarray
    poses: Tuple[Sim3, ...]

    def __post_init__(self):
        frames = tuple(int(f) for f in self.frames)
        points = np.asarray(self.points)
        confidences = np.asarray(self.confidences)
        sky = np.asarray(self.sky, dtype=bool)
        F = len(frames)
        if points.ndim != 4 or points.shape[0] != F or points.shape[-1] != 3:
            raise InvalidArgumentError(f"expected ({F}, H, W, 3) point maps, got {points.shape}")
        grid = points.shape[1:3]
        if confidences.shape != (F,) + grid or sky.shape != (F,) + grid:
            raise InvalidArgumentError("confidence and sky grids must match the point maps")
        if len(self.poses) != F:
            raise InvalidArgumentError(f"expected {F} local poses, got {len(self.poses)}")
        if not np.all(np.isfinite(points[~sky])):
            raise DataIntegrityError(f"submap {self.submap_id}: non-sky points must be finite")
        for array in (points, confidences, sky):
            array.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "confidences", confidences)
        object.__setattr__(self, "sky", sky)
        object.__setattr__(self, "poses", tuple(self.poses))

    @property
    def shape(self) -> Tuple[int, int]:
        return int(self.points.shape[1]), int(self.points.shape[2])

    def index_of(self, frame: int) -> int:
        try:
            return self.frames.index(int(frame))
        except ValueError:
            raise DataIntegrityError(
                f"frame {frame} is not part of submap {self.submap_id} ({self.role.value})"
            ) from None

    def has_frame(self, frame: int) -> bool:
        return int(frame) in self.frames

    def local_pose(self, frame: int) -> Sim3:
        return self.poses[self.index_of(frame)]


@dataclass(frozen=True, eq=False)
class GroundTruthWorld:
    """
    A generated world. Scene points are not stored: depth maps are
    regenerated per frame from (seed, frame).
    """

    seed: int
    height: int
    width: int
    focal: float
    depth_range: Tuple[float, float]
    sky_band_rows: int
    timestamps: np.ndarray
    rotations: np.ndarray  # camera-to-world
    positions: np.ndarray
    flow_stats: pd.DataFrame
    gt_states: List[MotionState]

    @property
    def n_frames(self) -> int:
        return int(self.timestamps.size)

    @property
    def principal_point(self) -> Tuple[float, float]:
        return (self.width - 1) / 2.0, (self.height - 1) / 2.0

    def pose(self, frame: int) -> Sim3:
        return Sim3(1.0, self.rotations[frame], self.positions[frame])

    def flow_means(self) -> np.ndarray:
        return self.flow_stats["mean_flow_mag"].to_numpy(dtype=float)
