import logging
from pathlib import Path
from typing import Protocol, Union

from app.exceptions import DataIntegrityError
from app.models.geometry import ContextRole, GroundTruthWorld, SubmapGeometry
from app.models.submap import Submap
from app.schemas.world import CorruptionConfig
from app.services.synthetic_service import SyntheticWorldService
from app.utils import pmap

logger = logging.getLogger(__name__)


class GeometryProvider(Protocol):
    """Maps an ordered frame set (a submap in a context role) to local geometry"""

    def infer(self, submap: Submap, role: ContextRole) -> SubmapGeometry:
        ...


def geometry_stem(submap_id: int, role: ContextRole) -> str:
    return f"submap_{submap_id:04d}_{role.value}"


class SyntheticGeometryProvider:
    def __init__(self, world: GroundTruthWorld, corruption: CorruptionConfig):
        self.world = world
        self.corruption = corruption

    def infer(self, submap: Submap, role: ContextRole) -> SubmapGeometry:
        return SyntheticWorldService.infer_submap_geometry(submap, self.world, self.corruption, role)


class ReplayGeometryProvider:
    """Reads geometry written by `save_geometry` (PMAP container + pose table per submap and role)"""

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)

    def infer(self, submap: Submap, role: ContextRole) -> SubmapGeometry:
        stem = geometry_stem(submap.id, role)
        pmap_path = self.directory / f"{stem}.pmap"
        pose_path = self.directory / f"{stem}_poses.csv"
        if not pmap_path.exists() or not pose_path.exists():
            raise DataIntegrityError(f"no replay geometry for submap {submap.id} as {role.value} in {self.directory}")
        points, confidences, sky = pmap.read_pmap(pmap_path)
        frames, poses = pmap.read_pose_table(pose_path)
        expected = submap.historical_context_frames if role == ContextRole.LOOP_HISTORICAL else submap.frames
        if tuple(frames) != tuple(expected):
            raise DataIntegrityError(
                f"replay geometry {stem} holds frames {frames}, the partition expects {list(expected)}"
            )
        return SubmapGeometry(
            submap_id=submap.id,
            role=role,
            frames=tuple(frames),
            points=points,
            confidences=confidences,
            sky=sky,
            poses=tuple(poses),
        )


def save_geometry(directory: Union[str, Path], geometry: SubmapGeometry) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = geometry_stem(geometry.submap_id, geometry.role)
    pmap.write_pmap(directory / f"{stem}.pmap", geometry.points, geometry.confidences, geometry.sky)
    pmap.write_pose_table(directory / f"{stem}_poses.csv", geometry.frames, geometry.poses)
    return directory / f"{stem}.pmap"
