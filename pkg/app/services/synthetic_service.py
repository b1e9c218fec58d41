"""
Synthetic ground-truth worlds and the geometry oracle that stands in for a
feed-forward reconstruction network.

World frame: x forward, y left, z up. Camera frame: x right, y down,
z forward. Intrinsics are fixed (f = W, principal point at the image
centre) and never leave this module.
"""
import logging
from typing import List, Tuple

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from app.config import settings
from app.exceptions import InvalidArgumentError
from app.models.geometry import FLOW_STAT_COLUMNS, ContextRole, GroundTruthWorld, SubmapGeometry
from app.models.motion import FlowField, MotionState
from app.models.sim3 import Sim3
from app.models.submap import Submap
from app.schemas.world import ArcSegment, CorruptionConfig, StraightSegment, WorldConfig
from app.services.motion_service import MotionService
from app.utils import lie

logger = logging.getLogger(__name__)

# camera axes expressed in the body frame (columns: right, down, forward)
CAMERA_BASE = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
SKY_DEPTH = 1000.0

_ROLE_STREAM = {ContextRole.PRECEDING: 1, ContextRole.SUCCEEDING: 2, ContextRole.LOOP_HISTORICAL: 3}
_GAUGE_STREAM = 0
_REINFERENCE_STREAM = 4


def _yaw(psi: float) -> np.ndarray:
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class SyntheticWorldService:
    """Ground-truth world generation and corrupted per-submap geometry"""

    @staticmethod
    def integrate_trajectory(config: WorldConfig) -> Tuple[np.ndarray, np.ndarray, List[MotionState]]:
        """Advance-then-emit integration of the primitives; returns headings, positions, labels"""
        psi = 0.0
        position = np.zeros(3)
        headings, positions, labels = [], [], []
        for primitive in config.trajectory:
            n = primitive.frames
            if isinstance(primitive, StraightSegment):
                step = primitive.length / n
                for _ in range(n):
                    position = position + step * np.array([np.cos(psi), np.sin(psi), 0.0])
                    headings.append(psi)
                    positions.append(position)
                    labels.append(MotionState.LINEAR)
            elif isinstance(primitive, ArcSegment):
                psi0 = psi
                sign = np.sign(primitive.sweep)
                for i in range(n):
                    psi_next = psi0 + primitive.sweep * (i + 1) / n
                    delta = sign * primitive.radius * np.array(
                        [np.sin(psi_next) - np.sin(psi), np.cos(psi) - np.cos(psi_next), 0.0]
                    )
                    position = position + delta
                    psi = psi_next
                    headings.append(psi)
                    positions.append(position)
                    labels.append(MotionState.TURNING)
            else:
                for _ in range(n):
                    headings.append(psi)
                    positions.append(position)
                    labels.append(MotionState.STATIC)
        return np.asarray(headings), np.asarray(positions), labels

    @staticmethod
    def depth_map(world: GroundTruthWorld, frame: int) -> np.ndarray:
        """Per-pixel depth of frame `frame`, regenerated from (seed, frame); sky rows at SKY_DEPTH"""
        rng = np.random.default_rng([world.seed, frame])
        near, far = world.depth_range
        depth = rng.uniform(near, far, size=(world.height, world.width))
        depth[: world.sky_band_rows] = SKY_DEPTH
        return depth

    @staticmethod
    def sky_mask(world: GroundTruthWorld) -> np.ndarray:
        sky = np.zeros((world.height, world.width), dtype=bool)
        sky[: world.sky_band_rows] = True
        return sky

    @staticmethod
    def backproject(world: GroundTruthWorld, depth: np.ndarray) -> np.ndarray:
        cx, cy = world.principal_point
        v, u = np.mgrid[0 : world.height, 0 : world.width].astype(float)
        x = (u - cx) / world.focal * depth
        y = (v - cy) / world.focal * depth
        return np.stack([x, y, depth], axis=-1)

    @staticmethod
    def frame_flow(world: GroundTruthWorld, frame: int) -> FlowField:
        """Flow of frame `frame`: previous frame's points projected into this camera, minus their pixel"""
        prev = frame - 1
        depth = SyntheticWorldService.depth_map(world, prev)
        cam_prev = SyntheticWorldService.backproject(world, depth).reshape(-1, 3)
        world_pts = cam_prev @ world.rotations[prev].T + world.positions[prev]
        cam = (world_pts - world.positions[frame]) @ world.rotations[frame]
        cx, cy = world.principal_point
        v, u = np.mgrid[0 : world.height, 0 : world.width].astype(float)
        u, v = u.reshape(-1), v.reshape(-1)
        z = cam[:, 2]
        ahead = z > 1e-6
        safe_z = np.where(ahead, z, 1.0)
        u2 = world.focal * cam[:, 0] / safe_z + cx
        v2 = world.focal * cam[:, 1] / safe_z + cy
        visible = ahead & (u2 >= 0) & (u2 <= world.width - 1) & (v2 >= 0) & (v2 <= world.height - 1)
        count = int(visible.sum())
        if count == 0:
            return FlowField(width=1, height=1, fx=np.zeros(1), fy=np.zeros(1))
        return FlowField(
            width=count, height=1, fx=(u2 - u)[visible], fy=(v2 - v)[visible]
        )

    @staticmethod
    def generate_world(config: WorldConfig, tau_flow: float = settings.TAU_FLOW) -> GroundTruthWorld:
        headings, positions, labels = SyntheticWorldService.integrate_trajectory(config)
        rotations = np.stack([_yaw(psi) @ CAMERA_BASE for psi in headings])
        n = len(labels)
        world = GroundTruthWorld(
            seed=config.seed,
            height=config.height,
            width=config.width,
            focal=float(config.width),
            depth_range=tuple(config.depth_range),
            sky_band_rows=config.sky_band_rows,
            timestamps=np.arange(n, dtype=float) / config.frame_rate,
            rotations=rotations,
            positions=positions,
            flow_stats=pd.DataFrame(columns=FLOW_STAT_COLUMNS),
            gt_states=labels,
        )
        rows = []
        for t in range(1, n):
            flow = SyntheticWorldService.frame_flow(world, t)
            rows.append((t,) + MotionService.frame_statistics(flow, tau_flow))
        first = rows[0] if rows else (0, 0.0, 1.0, 0.0)
        rows.insert(0, (0,) + tuple(first[1:]))
        stats = pd.DataFrame(rows, columns=FLOW_STAT_COLUMNS)
        object.__setattr__(world, "flow_stats", stats)
        SyntheticWorldService.check_margins(world)
        logger.info(
            "world generated seed=%d frames=%d path_length=%.1fm",
            config.seed,
            n,
            config.path_length,
        )
        return world

    @staticmethod
    def check_margins(world: GroundTruthWorld, tau_turn: float = settings.TAU_TURN) -> List[str]:
        """Report frames whose synthetic flow misses the construction margins"""
        problems = []
        stats = world.flow_stats
        labels = np.array([s.value for s in world.gt_states])
        stop = labels == MotionState.STATIC.value
        arc = labels == MotionState.TURNING.value
        if np.any(stats["static_ratio_raw"].to_numpy()[stop] < 0.99) or np.any(
            stats["mean_flow_mag"].to_numpy()[stop] > 0.01
        ):
            problems.append("stop frames carry visible flow")
        if np.any(stats["turning_score_raw"].to_numpy()[arc] < 2 * tau_turn):
            problems.append(f"arc frames fall below twice the turning threshold {tau_turn}")
        for problem in problems:
            logger.warning("world margin violated: %s", problem)
        return problems

    # Geometry oracle

    @staticmethod
    def random_similarity(rng: np.random.Generator, scale_sigma: float, rot_max: float, trans_sigma: float) -> Sim3:
        log_scale = rng.normal(0.0, 1.0) * scale_sigma
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(0.0, 1.0) * rot_max
        translation = rng.normal(size=3) * trans_sigma
        return Sim3(float(np.exp(log_scale)), lie.so3_exp(axis * angle), translation)

    @staticmethod
    def submap_gauge(seed: int, submap_id: int, corruption: CorruptionConfig) -> Sim3:
        """The per-submap gauge g_k, shared by every context role of the submap"""
        rng = np.random.default_rng([seed, submap_id, _GAUGE_STREAM])
        return SyntheticWorldService.random_similarity(
            rng, corruption.gauge_scale_sigma, corruption.gauge_rot_max, corruption.gauge_trans_sigma
        )

    @staticmethod
    def context_gauge(seed: int, submap_id: int, corruption: CorruptionConfig, role: ContextRole) -> Sim3:
        gauge = SyntheticWorldService.submap_gauge(seed, submap_id, corruption)
        if role != ContextRole.LOOP_HISTORICAL:
            return gauge
        rng = np.random.default_rng([seed, submap_id, _REINFERENCE_STREAM])
        perturbation = SyntheticWorldService.random_similarity(
            rng, corruption.reinference_scale_sigma, corruption.reinference_rot_max, 0.0
        )
        return perturbation @ gauge

    @staticmethod
    def local_frame_pose(world: GroundTruthWorld, submap: Submap, frame: int) -> Sim3:
        """Ground-truth camera pose of `frame` in the submap-local frame (origin: first base keyframe)"""
        return world.pose(submap.origin_frame).inverse() @ world.pose(frame)

    @staticmethod
    def corrupt_camera_points(
        rng: np.random.Generator,
        cam_true: np.ndarray,
        depth: np.ndarray,
        ground: np.ndarray,
        corruption: CorruptionConfig,
        role: ContextRole,
        far: float,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Noise, outliers and context bias in the camera frame; returns points and confidences"""
        cam = cam_true.copy()
        idx = np.flatnonzero(ground.reshape(-1))
        flat = cam.reshape(-1, 3)
        z = depth.reshape(-1)[idx]

        if corruption.point_noise_rel > 0:
            flat[idx] += rng.normal(size=(idx.size, 3)) * (corruption.point_noise_rel * z)[:, None]
        if corruption.outlier_fraction > 0:
            n_out = int(round(corruption.outlier_fraction * idx.size))
            chosen = idx[rng.choice(idx.size, size=n_out, replace=False)]
            true_ground = cam_true.reshape(-1, 3)[idx]
            lo, hi = true_ground.min(axis=0), true_ground.max(axis=0)
            flat[chosen] = rng.uniform(lo, hi, size=(n_out, 3))
        if corruption.context_bias_beta > 0:
            sign = 1.0 if role == ContextRole.SUCCEEDING else -1.0
            flat[idx] *= (1.0 + sign * corruption.context_bias_beta * z / far)[:, None]

        error = np.linalg.norm(flat[idx] - cam_true.reshape(-1, 3)[idx], axis=1) / z
        key = error + 1e-3 * z / far
        ranks = rankdata(key, method="ordinal")
        conf_ground = 1.0 - (ranks - 1.0) / max(idx.size - 1, 1)
        if corruption.confidence_noise > 0:
            conf_ground = conf_ground + rng.normal(size=idx.size) * corruption.confidence_noise
        confidences = np.ones(depth.size)
        confidences[idx] = np.clip(conf_ground, 0.0, None)
        return cam, confidences.reshape(depth.shape)

    @staticmethod
    def infer_submap_geometry(
        submap: Submap, world: GroundTruthWorld, corruption: CorruptionConfig, context_role: ContextRole
    ) -> SubmapGeometry:
        if context_role == ContextRole.LOOP_HISTORICAL:
            frames = submap.historical_context_frames
        else:
            frames = submap.frames
        gauge = SyntheticWorldService.context_gauge(world.seed, submap.id, corruption, context_role)
        rng = np.random.default_rng([world.seed, submap.id, _ROLE_STREAM[context_role]])
        sky = SyntheticWorldService.sky_mask(world)
        far = world.depth_range[1]

        points, confidences, poses = [], [], []
        for frame in frames:
            if not 0 <= frame < world.n_frames:
                raise InvalidArgumentError(f"frame {frame} does not exist in the world")
            depth = SyntheticWorldService.depth_map(world, frame)
            cam_true = SyntheticWorldService.backproject(world, depth)
            cam, conf = SyntheticWorldService.corrupt_camera_points(
                rng, cam_true, depth, ~sky, corruption, context_role, far
            )
            pose = gauge @ SyntheticWorldService.local_frame_pose(world, submap, frame)
            local = pose.apply(cam.reshape(-1, 3)).reshape(cam.shape)
            if corruption.quantize_float32:
                local = local.astype(np.float32).astype(np.float64)
                conf = conf.astype(np.float32).astype(np.float64)
            points.append(local)
            confidences.append(conf)
            poses.append(pose)

        sky_stack = np.broadcast_to(sky, (len(frames),) + sky.shape).copy()
        logger.debug(
            "oracle submap=%d role=%s frames=%d gauge=%r", submap.id, context_role.value, len(frames), gauge
        )
        return SubmapGeometry(
            submap_id=submap.id,
            role=context_role,
            frames=tuple(frames),
            points=np.stack(points),
            confidences=np.stack(confidences),
            sky=sky_stack,
            poses=tuple(poses),
        )
