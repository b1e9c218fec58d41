import enum


class PipelineMode(str, enum.Enum):
    SYNTHETIC = "synthetic"
    REPLAY = "replay"


class Stage(str, enum.Enum):
    MOTION = "motion"
    PARTITION = "partition"
    GEOMETRY = "geometry"
    REGISTRATION = "registration"
    OPTIMIZATION = "optimization"
    TRAJECTORY = "trajectory"
    METRICS = "metrics"
    ARTIFACTS = "artifacts"
