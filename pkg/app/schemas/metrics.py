from typing import List, Optional

from pydantic import BaseModel, Field

DEFAULT_SEGMENT_LENGTHS = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0]


class MetricReport(BaseModel):
    ate_rmse_m: Optional[float] = None
    # None means no segment length fits the reference, distinct from 0
    drift_pct: Optional[float] = None
    matched_poses: int = 0
    unmatched_poses: int = 0
    segments_evaluated: int = 0
    segment_lengths: List[float] = Field(default_factory=list)
    alignment_scale: Optional[float] = None

    @property
    def drift_applicable(self) -> bool:
        return self.drift_pct is not None
