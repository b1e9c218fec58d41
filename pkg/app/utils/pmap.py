"""
Point-map container (PMAP) and the local-pose table stored next to it.

Layout: magic `PMAP`, u16 version, little-endian u32 H, W, F, then F frames
of (H*W*3 float32 points, H*W float32 confidences, H*W u8 sky flags),
row-major.
"""
import struct
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.exceptions import DataIntegrityError
from app.models.sim3 import Sim3

MAGIC = b"PMAP"
VERSION = 1
_HEADER = struct.Struct("<4sHIII")

POSE_COLUMNS = ["frame", "s"] + [f"r{i}{j}" for i in range(3) for j in range(3)] + ["tx", "ty", "tz"]


def write_pmap(path: Union[str, Path], points: np.ndarray, confidences: np.ndarray, sky: np.ndarray) -> None:
    points = np.asarray(points)
    F, H, W = points.shape[:3]
    with open(path, "wb") as handle:
        handle.write(_HEADER.pack(MAGIC, VERSION, H, W, F))
        for f in range(F):
            handle.write(np.ascontiguousarray(points[f], dtype="<f4").tobytes())
            handle.write(np.ascontiguousarray(confidences[f], dtype="<f4").tobytes())
            handle.write(np.ascontiguousarray(sky[f], dtype="u1").tobytes())


def read_pmap(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (points (F,H,W,3), confidences (F,H,W), sky (F,H,W)) as float64/bool"""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataIntegrityError(f"cannot read point-map container {path}: {exc}") from exc
    if len(data) < _HEADER.size:
        raise DataIntegrityError(f"{path}: truncated header")
    magic, version, H, W, F = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataIntegrityError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DataIntegrityError(f"{path}: unsupported version {version}")
    frame_bytes = H * W * (12 + 4 + 1)
    if len(data) != _HEADER.size + F * frame_bytes:
        raise DataIntegrityError(f"{path}: expected {F} frames of {H}x{W}, size mismatch")

    points = np.empty((F, H, W, 3))
    confidences = np.empty((F, H, W))
    sky = np.empty((F, H, W), dtype=bool)
    offset = _HEADER.size
    for f in range(F):
        points[f] = np.frombuffer(data, dtype="<f4", count=H * W * 3, offset=offset).reshape(H, W, 3)
        offset += H * W * 12
        confidences[f] = np.frombuffer(data, dtype="<f4", count=H * W, offset=offset).reshape(H, W)
        offset += H * W * 4
        sky[f] = np.frombuffer(data, dtype="u1", count=H * W, offset=offset).reshape(H, W) != 0
        offset += H * W
    return points, confidences, sky


def write_pose_table(path: Union[str, Path], frames: Sequence[int], poses: Sequence[Sim3]) -> None:
    rows = [
        [int(frame), pose.scale] + pose.rotation.reshape(-1).tolist() + pose.translation.tolist()
        for frame, pose in zip(frames, poses)
    ]
    pd.DataFrame(rows, columns=POSE_COLUMNS).to_csv(path, index=False, float_format="%.17g")


def read_pose_table(path: Union[str, Path]) -> Tuple[List[int], List[Sim3]]:
    try:
        table = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataIntegrityError(f"cannot read pose table {path}: {exc}") from exc
    if list(table.columns) != POSE_COLUMNS:
        raise DataIntegrityError(f"{path}: expected columns {POSE_COLUMNS}")
    values = table[POSE_COLUMNS[1:]].to_numpy(dtype=float)
    poses = [Sim3(row[0], row[1:10].reshape(3, 3), row[10:13]) for row in values]
    return table["frame"].astype(int).tolist(), poses
