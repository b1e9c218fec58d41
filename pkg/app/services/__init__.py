from app.services.motion_service import MotionService
from app.services.partition_service import PartitionService
from app.services.synthetic_service import SyntheticWorldService
from app.services.registration_service import RegistrationService
from app.services.posegraph_service import PoseGraphService
from app.services.metrics_service import MetricsService
from app.services.pipeline_service import PipelineService

__all__ = [
    "MotionService",
    "PartitionService",
    "SyntheticWorldService",
    "RegistrationService",
    "PoseGraphService",
    "MetricsService",
    "PipelineService",
]
