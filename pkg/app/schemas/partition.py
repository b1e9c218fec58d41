from typing import Optional

from pydantic import BaseModel, Field, model_validator

from app.config import settings
from app.models.submap import LoopReuseMode, PartitionStrategy


class PartitionParams(BaseModel):
    tau_palx: float = Field(settings.TAU_PALX, gt=0, description="pixels")
    n_max: int = Field(settings.N_MAX, ge=2)
    n_ovlp: int = Field(settings.N_OVLP, ge=1)
    omega: int = Field(settings.OMEGA, ge=1, description="static boundary window, frames")
    loop_radius: float = Field(settings.LOOP_RADIUS, gt=0, description="meters")
    loop_min_gap: int = Field(settings.LOOP_MIN_GAP, ge=0, description="frames")
    loop_reuse_mode: LoopReuseMode = LoopReuseMode.UNIDIRECTIONAL
    loop_detection: bool = True
    strategy: PartitionStrategy = PartitionStrategy.TOPOLOGY
    segment_parallax: Optional[float] = Field(
        None, gt=0, description="pixels per segment for the parallax strategy, defaults to tau_palx x n_max"
    )
    redundancy_filtering: bool = True
    static_pruning: bool = True

    class Config:
        extra = "forbid"

    @model_validator(mode="after")
    def check_overlap_budget(self):
        if self.n_ovlp >= self.n_max:
            raise ValueError(f"n_ovlp ({self.n_ovlp}) must be smaller than n_max ({self.n_max})")
        return self

    @property
    def segment_parallax_budget(self) -> float:
        return self.segment_parallax if self.segment_parallax is not None else self.tau_palx * self.n_max


class PartitionRow(BaseModel):
    submap_id: int
    kind: str
    first_kf: int
    last_kf: int
    n_keyframes: int
    n_overlap: int
    loop_frame: int = -1
    query_frame: Optional[int] = None
