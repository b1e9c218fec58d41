"""
Trajectory files.

TUM: `timestamp tx ty tz qx qy qz qw` per line, `#` comments.
KITTI: 12 floats per line (row-major 3x4 pose); timestamps are frame indices.
"""
from pathlib import Path
from typing import List, Union

import numpy as np
from scipy.spatial.transform import Rotation

from app.exceptions import DataIntegrityError, SlamError, TrajectoryParseError
from app.models.trajectory import Trajectory, TrajectoryFormat
from app.utils import lie

QUATERNION_TOL = 1e-3
ROTATION_TOL = 1e-3


def _fields(line: str, count: int, line_number: int) -> List[float]:
    parts = line.replace(",", " ").split()
    if len(parts) != count:
        raise TrajectoryParseError(f"expected {count} values, found {len(parts)}", line_number)
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise TrajectoryParseError(f"not a number: {exc}", line_number) from exc
    if not np.all(np.isfinite(values)):
        raise TrajectoryParseError("non-finite value", line_number)
    return values


def _parse_tum(text: str) -> Trajectory:
    stamps, rotations, positions = [], [], []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        values = _fields(line, 8, number)
        quat = np.array(values[4:8])
        norm = float(np.linalg.norm(quat))
        if abs(norm - 1.0) > QUATERNION_TOL:
            raise DataIntegrityError(f"line {number}: quaternion norm {norm:.6f} is not 1")
        stamps.append(values[0])
        positions.append(values[1:4])
        rotations.append(Rotation.from_quat(quat / norm).as_matrix())
    if not stamps:
        return Trajectory(np.zeros(0), np.zeros((0, 3, 3)), np.zeros((0, 3)))
    stamps = np.asarray(stamps)
    order = np.argsort(stamps, kind="stable")
    if np.any(np.diff(stamps[order]) <= 0):
        raise DataIntegrityError("duplicate timestamps in trajectory")
    return Trajectory(stamps[order], np.asarray(rotations)[order], np.asarray(positions)[order])


def _parse_kitti(text: str) -> Trajectory:
    rotations, positions = [], []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        pose = np.asarray(_fields(line, 12, number)).reshape(3, 4)
        if lie.orthonormality_error(pose[:, :3]) > ROTATION_TOL or np.linalg.det(pose[:, :3]) <= 0:
            raise DataIntegrityError(f"line {number}: rotation block is not a rotation")
        rotations.append(lie.project_to_rotation(pose[:, :3]))
        positions.append(pose[:, 3])
    n = len(positions)
    if n == 0:
        return Trajectory(np.zeros(0), np.zeros((0, 3, 3)), np.zeros((0, 3)))
    return Trajectory(np.arange(n, dtype=float), np.asarray(rotations), np.asarray(positions))


def parse_trajectory(text: str, fmt: TrajectoryFormat = TrajectoryFormat.TUM) -> Trajectory:
    fmt = TrajectoryFormat(fmt)
    if fmt == TrajectoryFormat.TUM:
        return _parse_tum(text)
    return _parse_kitti(text)


def format_trajectory(trajectory: Trajectory, fmt: TrajectoryFormat = TrajectoryFormat.TUM) -> str:
    fmt = TrajectoryFormat(fmt)
    lines = []
    if fmt == TrajectoryFormat.TUM:
        lines.append("# timestamp tx ty tz qx qy qz qw")
        quats = Rotation.from_matrix(trajectory.rotations).as_quat() if len(trajectory) else np.zeros((0, 4))
        for stamp, position, quat in zip(trajectory.timestamps, trajectory.positions, quats):
            values = [stamp, *position, *quat]
            lines.append(" ".join(f"{v:.17g}" for v in values))
    else:
        for R, position in zip(trajectory.rotations, trajectory.positions):
            pose = np.hstack([R, position[:, None]]).reshape(-1)
            lines.append(" ".join(f"{v:.17g}" for v in pose))
    return "\n".join(lines) + "\n"


def load_trajectory(path: Union[str, Path], fmt: TrajectoryFormat = TrajectoryFormat.TUM) -> Trajectory:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataIntegrityError(f"cannot read trajectory {path}: {exc}") from exc
    try:
        return parse_trajectory(text, fmt)
    except SlamError as exc:
        exc.message = f"{path}: {exc.message}"
        raise


def save_trajectory(
    path: Union[str, Path], trajectory: Trajectory, fmt: TrajectoryFormat = TrajectoryFormat.TUM
) -> Path:
    path = Path(path)
    path.write_text(format_trajectory(trajectory, fmt), encoding="utf-8")
    return path
