from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from app.config import settings


class StraightSegment(BaseModel):
    kind: Literal["straight"] = "straight"
    length: float = Field(..., gt=0, description="meters")
    frames: int = Field(..., ge=1)


class ArcSegment(BaseModel):
    kind: Literal["arc"] = "arc"
    radius: float = Field(..., gt=0, description="meters")
    sweep: float = Field(..., description="radians, positive turns left")
    frames: int = Field(..., ge=1)

    @field_validator("sweep")
    @classmethod
    def validate_sweep(cls, v):
        if v == 0 or abs(v) >= 2 * np.pi:
            raise ValueError("arc sweep must be non-zero and smaller than a full turn")
        return v


class Stop(BaseModel):
    kind: Literal["stop"] = "stop"
    frames: int = Field(..., ge=1)


Primitive = Annotated[Union[StraightSegment, ArcSegment, Stop], Field(discriminator="kind")]


PRESETS = {
    "straight_line": [StraightSegment(length=120.0, frames=120)],
    "square_loop": [
        primitive
        for _ in range(4)
        for primitive in (
            StraightSegment(length=250.0, frames=250),
            ArcSegment(radius=50.0, sweep=float(np.pi / 2), frames=18),
        )
    ],
    "stop_and_go": [
        StraightSegment(length=60.0, frames=60),
        Stop(frames=30),
        StraightSegment(length=60.0, frames=60),
    ],
}


def parse_trajectory_spec(text: str) -> List[Union[StraightSegment, ArcSegment, Stop]]:
    """Parse `straight:LEN:FRAMES, arc:RADIUS:SWEEP:FRAMES, stop:FRAMES`"""
    primitives: List[Union[StraightSegment, ArcSegment, Stop]] = []
    for token in (t.strip() for t in text.split(",")):
        if not token:
            continue
        name, *args = [part.strip() for part in token.split(":")]
        try:
            if name == "straight" and len(args) == 2:
                primitives.append(StraightSegment(length=float(args[0]), frames=int(args[1])))
            elif name == "arc" and len(args) == 3:
                primitives.append(ArcSegment(radius=float(args[0]), sweep=float(args[1]), frames=int(args[2])))
            elif name == "stop" and len(args) == 1:
                primitives.append(Stop(frames=int(args[0])))
            else:
                raise ValueError(f"unknown primitive '{token}'")
        except ValueError as exc:
            raise ValueError(f"bad trajectory primitive '{token}': {exc}") from None
    return primitives


class WorldConfig(BaseModel):
    seed: int = settings.DEFAULT_SEED
    preset: Optional[str] = None
    trajectory: List[Primitive] = Field(default_factory=list)
    height: int = Field(96, gt=0)
    width: int = Field(128, gt=0)
    depth_range: Tuple[float, float] = (6.0, 40.0)
    sky_band_rows: int = Field(8, ge=0)
    frame_rate: float = Field(settings.FRAME_RATE, gt=0, description="Hz")

    class Config:
        extra = "forbid"

    @field_validator("trajectory", mode="before")
    @classmethod
    def parse_trajectory(cls, v):
        if isinstance(v, str):
            return parse_trajectory_spec(v)
        return v

    @field_validator("depth_range", mode="before")
    @classmethod
    def parse_depth_range(cls, v):
        if isinstance(v, str):
            return tuple(float(part) for part in v.split(","))
        return v

    @field_validator("depth_range")
    @classmethod
    def validate_depth_range(cls, v):
        if not 0 < v[0] < v[1]:
            raise ValueError("depth range must satisfy 0 < near < far")
        return v

    @model_validator(mode="after")
    def resolve_preset(self):
        if self.preset is not None:
            if self.preset not in PRESETS:
                raise ValueError(f"unknown preset '{self.preset}', expected one of {sorted(PRESETS)}")
            if not self.trajectory:
                self.trajectory = [p.model_copy() for p in PRESETS[self.preset]]
        if not self.trajectory:
            raise ValueError("a world needs at least one trajectory primitive")
        if self.n_frames < 2:
            raise ValueError("a world needs at least two frames")
        if self.sky_band_rows >= self.height:
            raise ValueError("sky band must leave some ground rows")
        return self

    @property
    def n_frames(self) -> int:
        return sum(p.frames for p in self.trajectory)

    @property
    def path_length(self) -> float:
        total = 0.0
        for p in self.trajectory:
            if isinstance(p, StraightSegment):
                total += p.length
            elif isinstance(p, ArcSegment):
                total += p.radius * abs(p.sweep)
        return total


class CorruptionConfig(BaseModel):
    gauge_scale_sigma: float = Field(0.0, ge=0, description="std of log-scale")
    gauge_rot_max: float = Field(0.0, ge=0, lt=np.pi, description="radians")
    gauge_trans_sigma: float = Field(0.0, ge=0, description="meters")
    point_noise_rel: float = Field(0.0, ge=0, description="fraction of depth")
    outlier_fraction: float = Field(0.0, ge=0, lt=0.5)
    context_bias_beta: float = Field(0.0, ge=0, lt=1)
    confidence_noise: float = Field(0.0, ge=0)
    reinference_scale_sigma: float = Field(0.0, ge=0)
    reinference_rot_max: float = Field(0.0, ge=0, lt=np.pi)
    quantize_float32: bool = False

    class Config:
        extra = "forbid"

    @property
    def is_zero(self) -> bool:
        return all(
            getattr(self, name) == 0
            for name in (
                "gauge_scale_sigma",
                "gauge_rot_max",
                "gauge_trans_sigma",
                "point_noise_rel",
                "outlier_fraction",
                "context_bias_beta",
                "confidence_noise",
            )
        )
