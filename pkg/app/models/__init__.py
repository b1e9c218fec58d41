from app.models.sim3 import Sim3
from app.models.motion import FlowField, MotionProfile, MotionState
from app.models.submap import BaseSegment, LoopHit, LoopReuseMode, PartitionResult, SegmentKind, Submap
from app.models.geometry import ContextRole, GroundTruthWorld, SubmapGeometry
from app.models.registration import AnchorKind, AnchorSpec, EdgeKind, RegistrationResult, Sim3Edge, ValidMask
from app.models.posegraph import PoseGraph
from app.models.trajectory import Trajectory, TrajectoryFormat
from app.models.pipeline import PipelineMode, Stage

__all__ = [
    "Sim3",
    "FlowField",
    "MotionProfile",
    "MotionState",
    "BaseSegment",
    "LoopHit",
    "LoopReuseMode",
    "PartitionResult",
    "SegmentKind",
    "Submap",
    "ContextRole",
    "GroundTruthWorld",
    "SubmapGeometry",
    "AnchorKind",
    "AnchorSpec",
    "EdgeKind",
    "RegistrationResult",
    "Sim3Edge",
    "ValidMask",
    "PoseGraph",
    "Trajectory",
    "TrajectoryFormat",
    "PipelineMode",
    "Stage",
]
