from app.schemas.motion import MotionParams
from app.schemas.partition import PartitionParams, PartitionRow
from app.schemas.world import (
    ArcSegment,
    CorruptionConfig,
    PRESETS,
    StraightSegment,
    Stop,
    WorldConfig,
    parse_trajectory_spec,
)
from app.schemas.registration import RegistrationParams
from app.schemas.posegraph import LMParams, OptimizeReport
from app.schemas.metrics import DEFAULT_SEGMENT_LENGTHS, MetricReport
from app.schemas.pipeline import (
    GenerateResponse,
    PartitionResponse,
    PipelineConfig,
    PipelineReport,
    ReplayPaths,
)

__all__ = [
    "MotionParams",
    "PartitionParams",
    "PartitionRow",
    "ArcSegment",
    "CorruptionConfig",
    "PRESETS",
    "StraightSegment",
    "Stop",
    "WorldConfig",
    "parse_trajectory_spec",
    "RegistrationParams",
    "LMParams",
    "OptimizeReport",
    "DEFAULT_SEGMENT_LENGTHS",
    "MetricReport",
    "GenerateResponse",
    "PartitionResponse",
    "PipelineConfig",
    "PipelineReport",
    "ReplayPaths",
]
