import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd

from app.exceptions import (
    DataIntegrityError,
    InsufficientCorrespondencesError,
    MissingAnchorError,
    StageError,
)
from app.models.geometry import ContextRole, GroundTruthWorld, SubmapGeometry
from app.models.motion import MotionProfile
from app.models.pipeline import PipelineMode, Stage
from app.models.registration import AnchorKind, AnchorSpec, EdgeKind, Sim3Edge
from app.models.sim3 import Sim3
from app.models.submap import LoopReuseMode, PartitionResult, Submap
from app.models.trajectory import Trajectory, TrajectoryFormat
from app.schemas.metrics import MetricReport
from app.schemas.pipeline import GenerateResponse, PartitionResponse, PipelineConfig, PipelineReport
from app.schemas.registration import RegistrationParams
from app.services.geometry_provider import (
    GeometryProvider,
    ReplayGeometryProvider,
    SyntheticGeometryProvider,
    save_geometry,
)
from app.services.metrics_service import MetricsService
from app.services.motion_service import MotionService
from app.services.partition_service import PartitionService
from app.services.posegraph_service import PoseGraphService
from app.services.registration_service import RegistrationService
from app.services.synthetic_service import SyntheticWorldService
from app.utils import reports
from app.utils.trajectory_io import load_trajectory, save_trajectory

logger = logging.getLogger(__name__)

PARTIAL_SUFFIX = ".partial"
# stage_times entry for reading or generating inputs
INPUTS_BUCKET = "inputs"
TRAJECTORY_SUFFIX = {TrajectoryFormat.TUM: "tum", TrajectoryFormat.KITTI: "kitti"}


@dataclass
class EdgeTask:
    kind: EdgeKind
    anchor: AnchorSpec
    key_i: Tuple[int, ContextRole]
    key_j: Tuple[int, ContextRole]


@dataclass
class RunInputs:
    """What the motion stage produces for either mode"""

    flow_stats: pd.DataFrame
    timestamps: np.ndarray
    world: Optional[GroundTruthWorld] = None
    reference: Optional[Trajectory] = None
    loop_rows: Optional[List[Tuple[int, int, int]]] = None


@dataclass
class ArtifactLog:
    """Files written by a run; renamed with a `.partial` suffix when the run fails"""

    directory: Path
    paths: Dict[str, Path] = field(default_factory=dict)

    def add(self, name: str, path: Path) -> None:
        self.paths[name] = Path(path)

    def mark_partial(self) -> None:
        for name, path in list(self.paths.items()):
            if path.exists():
                target = path.with_name(path.name + PARTIAL_SUFFIX)
                path.replace(target)
                self.paths[name] = target


def geometry_roles(submap_id: int, n_submaps: int) -> List[ContextRole]:
    """Preceding when the submap has a successor, Succeeding when it has a predecessor"""
    roles = []
    if submap_id < n_submaps - 1 or n_submaps == 1:
        roles.append(ContextRole.PRECEDING)
    if submap_id > 0:
        roles.append(ContextRole.SUCCEEDING)
    return roles


def primary_role(submap_id: int, n_submaps: int) -> ContextRole:
    return geometry_roles(submap_id, n_submaps)[0]


class PipelineService:
    """Stage orchestration: motion, partition, geometry, registration, optimization, metrics"""

    @staticmethod
    @contextmanager
    def _stage(stage: Stage, times: Dict[str, float], bucket: Optional[str] = None) -> Iterator[None]:
        """Failures are reported as `stage`; elapsed time is added to `bucket`, the stage name by default"""
        start = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except Exception as exc:
            logger.error("stage %s failed: %s", stage.value, exc)
            raise StageError(stage.value, exc) from exc
        finally:
            key = bucket or stage.value
            times[key] = times.get(key, 0.0) + time.perf_counter() - start

    # Inputs

    @staticmethod
    def load_inputs(config: PipelineConfig) -> RunInputs:
        if config.mode == PipelineMode.SYNTHETIC:
            world = SyntheticWorldService.generate_world(config.world, config.motion.tau_flow)
            reference = Trajectory(world.timestamps, world.rotations, world.positions)
            return RunInputs(world.flow_stats, world.timestamps, world=world, reference=reference)

        paths = config.replay
        flow_path = paths.resolve(paths.flow_stats)
        if flow_path is None or not flow_path.exists():
            raise DataIntegrityError(f"flow statistics file {flow_path} does not exist")
        flow_stats = MotionService.load_flow_stats(flow_path)
        timestamps = np.arange(len(flow_stats), dtype=float) / config.world.frame_rate
        reference = None
        gt_path = paths.resolve(paths.ground_truth)
        if gt_path is not None and gt_path.exists():
            reference = load_trajectory(gt_path, TrajectoryFormat.TUM)
            if len(reference) == len(flow_stats):
                timestamps = reference.timestamps
        loop_rows = None
        loop_path = paths.resolve(paths.loop_candidates)
        if loop_path is not None and loop_path.exists():
            loop_rows = reports.read_loop_candidates(loop_path)
        return RunInputs(flow_stats, timestamps, reference=reference, loop_rows=loop_rows)

    @staticmethod
    def partition_inputs(config: PipelineConfig, inputs: RunInputs, profile: MotionProfile) -> PartitionResult:
        flow_means = inputs.flow_stats["mean_flow_mag"].to_numpy(dtype=float)
        params = config.partition
        if inputs.world is not None:
            return PartitionService.partition(profile.states, flow_means, params, positions=inputs.world.positions)
        loop_hits = {}
        if params.loop_detection and inputs.loop_rows:
            segments = PartitionService.partition_sequence(len(profile.states), profile.states, flow_means, params)
            owner = {kf: k for k, seg in enumerate(segments) for kf in seg.keyframes}
            loop_hits = reports.loop_hits_by_segment(inputs.loop_rows, owner)
        return PartitionService.partition(profile.states, flow_means, params, loop_hits=loop_hits)

    @staticmethod
    def provider_for(config: PipelineConfig, inputs: RunInputs) -> GeometryProvider:
        if inputs.world is not None:
            return SyntheticGeometryProvider(inputs.world, config.corruption)
        return ReplayGeometryProvider(config.replay.resolve(config.replay.geometry_dir))

    # Geometry and registration

    @staticmethod
    def edge_tasks(submaps: Tuple[Submap, ...], params: RegistrationParams, loop_mode: LoopReuseMode) -> List[EdgeTask]:
        n = len(submaps)
        tasks = []
        for k in range(n - 1):
            anchor = RegistrationService.overlap_anchor(submaps[k].overlap_frames, params)
            tasks.append(
                EdgeTask(EdgeKind.ODOMETRY, anchor, (k, ContextRole.PRECEDING), (k + 1, ContextRole.SUCCEEDING))
            )
        for m, submap in enumerate(submaps):
            if not submap.loop_frames:
                continue
            k = submap.historical_submap
            historical = submap.loop_frames[0]
            current = (m, primary_role(m, n))
            if loop_mode == LoopReuseMode.BIDIRECTIONAL:
                frames = tuple(sorted({historical, submap.loop_query}))
                tasks.append(
                    EdgeTask(EdgeKind.LOOP, AnchorSpec(AnchorKind.LOOP, frames), (k, ContextRole.LOOP_HISTORICAL), current)
                )
            else:
                role_k = ContextRole.SUCCEEDING if k > 0 else ContextRole.PRECEDING
                tasks.append(EdgeTask(EdgeKind.LOOP, RegistrationService.loop_anchor(historical), (k, role_k), current))
        return tasks

    @staticmethod
    def infer_geometries(
        submaps: Tuple[Submap, ...], provider: GeometryProvider, loop_mode: LoopReuseMode
    ) -> Dict[Tuple[int, ContextRole], SubmapGeometry]:
        n = len(submaps)
        geometries = {}
        for submap in submaps:
            for role in geometry_roles(submap.id, n):
                geometries[(submap.id, role)] = provider.infer(submap, role)
            if loop_mode == LoopReuseMode.BIDIRECTIONAL and submap.reinjected_frames:
                geometries[(submap.id, ContextRole.LOOP_HISTORICAL)] = provider.infer(
                    submap, ContextRole.LOOP_HISTORICAL
                )
        return geometries

    @staticmethod
    def register_task(
        task: EdgeTask, geometries: Dict[Tuple[int, ContextRole], SubmapGeometry], params: RegistrationParams
    ) -> Sim3Edge:
        geometry_i, geometry_j = geometries[task.key_i], geometries[task.key_j]
        try:
            return RegistrationService.register_pair(geometry_i, geometry_j, task.anchor, params, task.kind)
        except (InsufficientCorrespondencesError, MissingAnchorError) as exc:
            logger.warning("edge %d->%d (%s) dropped: %s", task.key_i[0], task.key_j[0], task.kind.value, exc)
            return Sim3Edge(
                from_submap=task.key_i[0],
                to_submap=task.key_j[0],
                transform=Sim3.identity(),
                inlier_ratio=0.0,
                kind=task.kind,
                accepted=False,
                anchor_frames=task.anchor.frames,
            )

    @staticmethod
    def register_all(
        tasks: List[EdgeTask], geometries: Dict[Tuple[int, ContextRole], SubmapGeometry], params: RegistrationParams
    ) -> List[Sim3Edge]:
        if params.workers == 1 or len(tasks) < 2:
            return [PipelineService.register_task(t, geometries, params) for t in tasks]
        with ThreadPoolExecutor(max_workers=params.workers) as pool:
            return list(pool.map(lambda t: PipelineService.register_task(t, geometries, params), tasks))

    # Runs

    @staticmethod
    def run_partition(config: PipelineConfig, output_dir: Optional[Path] = None) -> PartitionResponse:
        """Motion analysis and partitioning only; writes partition.csv when given a directory"""
        times: Dict[str, float] = {}
        with PipelineService._stage(Stage.MOTION, times, bucket=INPUTS_BUCKET):
            inputs = PipelineService.load_inputs(config)
        with PipelineService._stage(Stage.MOTION, times):
            profile = MotionService.build_profile(inputs.flow_stats, config.motion)
        with PipelineService._stage(Stage.PARTITION, times):
            result = PipelineService.partition_inputs(config, inputs, profile)
        rows = PartitionService.report_rows(result)
        if output_dir is not None:
            output_dir = Path(output_dir)
            output_dir.mkdir(parents=True, exist_ok=True)
            reports.write_partition(output_dir / "partition.csv", rows)
        return PartitionResponse(
            n_frames=len(profile),
            n_keyframes=len(result.keyframes),
            states=profile.state_codes,
            submaps=rows,
            warnings=list(result.warnings),
        )

    @staticmethod
    def generate_replay(config: PipelineConfig, directory: Path) -> GenerateResponse:
        """
        Write a synthetic world as replay inputs: flow statistics, ground
        truth, loop candidates and the per-submap geometry of every role the
        configured loop mode needs.
        """
        directory = Path(directory)
        geometry_dir = directory / "geometry"
        geometry_dir.mkdir(parents=True, exist_ok=True)
        inputs = PipelineService.load_inputs(config.model_copy(update={"mode": PipelineMode.SYNTHETIC}))
        profile = MotionService.build_profile(inputs.flow_stats, config.motion)
        result = PipelineService.partition_inputs(config, inputs, profile)
        provider = PipelineService.provider_for(config, inputs)
        mode = config.partition.loop_reuse_mode

        files = {}
        flow_path = directory / "flow_stats.csv"
        MotionService.save_flow_stats(inputs.flow_stats, flow_path)
        files["flow_stats"] = str(flow_path)
        files["ground_truth"] = str(save_trajectory(directory / "ground_truth.tum", inputs.reference))
        files["loop_candidates"] = str(reports.write_loop_candidates(directory / "loop_candidates.csv", result.loop_hits))
        for geometry in PipelineService.infer_geometries(result.submaps, provider, mode).values():
            save_geometry(geometry_dir, geometry)
        files["geometry"] = str(geometry_dir)
        logger.info("replay files written to %s (%d submaps)", directory, len(result.submaps))
        return GenerateResponse(
            directory=str(directory), n_frames=len(profile), n_submaps=len(result.submaps), files=files
        )

    @staticmethod
    def run_pipeline(config: PipelineConfig, output_dir: Optional[Path] = None) -> PipelineReport:
        """
        Full run. Stage failures raise StageError; files already written are
        renamed with a `.partial` suffix.
        """
        output_dir = Path(output_dir or config.output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        artifacts = ArtifactLog(output_dir)
        try:
            return PipelineService._run(config, artifacts)
        except StageError:
            artifacts.mark_partial()
            raise

    @staticmethod
    def _run(config: PipelineConfig, artifacts: ArtifactLog) -> PipelineReport:
        times: Dict[str, float] = {}
        out = artifacts.directory
        warnings: List[str] = []
        loop_mode = config.partition.loop_reuse_mode
        logger.info("pipeline start mode=%s loop_mode=%s seed=%d", config.mode.value, config.loop_mode, config.seed)

        with PipelineService._stage(Stage.MOTION, times, bucket=INPUTS_BUCKET):
            inputs = PipelineService.load_inputs(config)
        with PipelineService._stage(Stage.MOTION, times):
            profile = MotionService.build_profile(inputs.flow_stats, config.motion)

        with PipelineService._stage(Stage.PARTITION, times):
            partition = PipelineService.partition_inputs(config, inputs, profile)
            warnings.extend(partition.warnings)
        with PipelineService._stage(Stage.ARTIFACTS, {}):
            artifacts.add(
                "partition",
                reports.write_partition(out / "partition.csv", PartitionService.report_rows(partition)),
            )

        submaps = partition.submaps
        # replay geometry is read from disk, not inferred
        geometry_bucket = None if inputs.world is not None else INPUTS_BUCKET
        with PipelineService._stage(Stage.GEOMETRY, times, bucket=geometry_bucket):
            provider = PipelineService.provider_for(config, inputs)
            geometries = PipelineService.infer_geometries(submaps, provider, loop_mode)

        with PipelineService._stage(Stage.REGISTRATION, times):
            tasks = PipelineService.edge_tasks(submaps, config.registration, loop_mode)
            edges = PipelineService.register_all(tasks, geometries, config.registration)
        with PipelineService._stage(Stage.ARTIFACTS, {}):
            artifacts.add("edges", reports.write_edges(out / "edges.csv", edges))
        accepted = [e for e in edges if e.accepted]
        logger.info("registration edges=%d accepted=%d", len(edges), len(accepted))

        n = len(submaps)
        owned = [(s, geometries[(s.id, primary_role(s.id, n))]) for s in submaps]
        with PipelineService._stage(Stage.OPTIMIZATION, times):
            graph = PoseGraphService.build_graph([s.id for s in submaps], edges, gauge=0)
            initial_trajectory = PoseGraphService.compose_global_trajectory(graph, owned, inputs.timestamps)
            optimized, opt_report = PoseGraphService.optimize_graph(graph, params=config.lm)
        with PipelineService._stage(Stage.ARTIFACTS, {}):
            artifacts.add("graph_nodes", reports.write_graph_nodes(out / "graph_nodes.csv", optimized))
            artifacts.add(
                "graph_report",
                reports.write_key_values(
                    out / "graph_report.txt", opt_report.model_dump(exclude={"residual_norms"})
                ),
            )

        with PipelineService._stage(Stage.TRAJECTORY, times):
            trajectory = PoseGraphService.compose_global_trajectory(optimized, owned, inputs.timestamps)
        with PipelineService._stage(Stage.ARTIFACTS, {}):
            fmt = config.trajectory_format
            artifacts.add(
                "trajectory", save_trajectory(out / f"trajectory.{TRAJECTORY_SUFFIX[fmt]}", trajectory, fmt)
            )

        metrics = None
        pre_ate = None
        if inputs.reference is not None:
            with PipelineService._stage(Stage.METRICS, times):
                metrics = MetricsService.evaluate(trajectory, inputs.reference, stride=config.drift_stride)
                pre_ate = MetricsService.ate_rmse(initial_trajectory, inputs.reference)
            with PipelineService._stage(Stage.ARTIFACTS, {}):
                values = metrics.model_dump(exclude={"segment_lengths", "alignment_scale"})
                values["pre_optimization_ate_m"] = pre_ate
                artifacts.add("metrics", reports.write_key_values(out / "metrics.txt", values))

        report = PipelineReport(
            mode=config.mode,
            loop_mode=config.loop_mode,
            seed=config.seed,
            stage_times=times,
            n_frames=len(profile),
            n_keyframes=len(partition.keyframes),
            n_submaps=n,
            n_edges=len(edges),
            n_accepted=len(accepted),
            n_rejected=len(edges) - len(accepted),
            n_loop_edges=sum(1 for e in accepted if e.kind == EdgeKind.LOOP),
            pre_optimization_ate_m=pre_ate,
            metrics=metrics,
            optimization=opt_report,
            artifacts={name: str(path) for name, path in artifacts.paths.items()},
            warnings=warnings,
        )
        with PipelineService._stage(Stage.ARTIFACTS, {}):
            report_path = out / "report.json"
            report.artifacts["report"] = str(report_path)
            report_path.write_text(json.dumps(report.model_dump(mode="json"), indent=2), encoding="utf-8")
            artifacts.add("report", report_path)
        logger.info(
            "pipeline done submaps=%d edges=%d/%d ate=%s",
            n,
            len(accepted),
            len(edges),
            "n/a" if metrics is None else f"{metrics.ate_rmse_m:.6f}",
        )
        return report

    @staticmethod
    def evaluate_files(
        estimate_path: Path,
        reference_path: Path,
        fmt: TrajectoryFormat = TrajectoryFormat.TUM,
        stride: int = 1,
    ) -> MetricReport:
        estimate = load_trajectory(estimate_path, fmt)
        reference = load_trajectory(reference_path, fmt)
        return MetricsService.evaluate(estimate, reference, stride=stride)
