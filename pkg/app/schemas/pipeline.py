from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, model_validator

from app.config import settings
from app.models.pipeline import PipelineMode
from app.models.trajectory import TrajectoryFormat
from app.schemas.metrics import MetricReport
from app.schemas.motion import MotionParams
from app.schemas.partition import PartitionParams, PartitionRow
from app.schemas.posegraph import LMParams, OptimizeReport
from app.schemas.registration import RegistrationParams
from app.schemas.world import CorruptionConfig, WorldConfig


class ReplayPaths(BaseModel):
    """Replay inputs; relative paths resolve against `directory`"""

    directory: Optional[str] = None
    flow_stats: str = "flow_stats.csv"
    geometry_dir: str = "geometry"
    loop_candidates: Optional[str] = "loop_candidates.csv"
    ground_truth: Optional[str] = "ground_truth.tum"

    class Config:
        extra = "forbid"

    def resolve(self, name: Optional[str]) -> Optional[Path]:
        if name is None:
            return None
        path = Path(name)
        if self.directory and not path.is_absolute():
            path = Path(self.directory) / path
        return path


class PipelineConfig(BaseModel):
    mode: PipelineMode = PipelineMode.SYNTHETIC
    output_dir: str = settings.OUTPUT_DIR
    trajectory_format: TrajectoryFormat = TrajectoryFormat.TUM
    drift_stride: int = Field(1, ge=1)
    world: WorldConfig = Field(default_factory=lambda: WorldConfig(preset="straight_line"))
    replay: ReplayPaths = Field(default_factory=ReplayPaths)
    motion: MotionParams = Field(default_factory=MotionParams)
    partition: PartitionParams = Field(default_factory=PartitionParams)
    registration: RegistrationParams = Field(default_factory=RegistrationParams)
    lm: LMParams = Field(default_factory=LMParams)
    corruption: CorruptionConfig = Field(default_factory=CorruptionConfig)

    class Config:
        extra = "forbid"

    @model_validator(mode="after")
    def check_replay_inputs(self):
        if self.mode == PipelineMode.REPLAY and not self.replay.directory:
            raise ValueError("replay mode needs replay.directory")
        return self

    @property
    def seed(self) -> int:
        return self.world.seed

    @property
    def loop_mode(self) -> str:
        if not self.partition.loop_detection:
            return "off"
        return self.partition.loop_reuse_mode.value


class PipelineReport(BaseModel):
    mode: PipelineMode
    loop_mode: str
    seed: int
    stage_times: Dict[str, float] = Field(default_factory=dict)
    n_frames: int = 0
    n_keyframes: int = 0
    n_submaps: int = 0
    n_edges: int = 0
    n_accepted: int = 0
    n_rejected: int = 0
    n_loop_edges: int = 0
    pre_optimization_ate_m: Optional[float] = None
    metrics: Optional[MetricReport] = None
    optimization: Optional[OptimizeReport] = None
    artifacts: Dict[str, str] = Field(default_factory=dict)
    warnings: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_accounting(self):
        if self.n_accepted + self.n_rejected != self.n_edges:
            raise ValueError("accepted + rejected edges must equal the edge count")
        if any(t < 0 for t in self.stage_times.values()):
            raise ValueError("stage times must be non-negative")
        return self


class PartitionResponse(BaseModel):
    n_frames: int
    n_keyframes: int
    states: str
    submaps: List[PartitionRow]
    warnings: List[str] = Field(default_factory=list)


class GenerateResponse(BaseModel):
    directory: str
    n_frames: int
    n_submaps: int
    files: Dict[str, str]
