import enum
from dataclasses import dataclass, field
from typing import Optional, Tuple

from app.exceptions import InvalidArgumentError
from app.models.motion import MotionState


class SegmentKind(str, enum.Enum):
    TURNING = "turning"
    LINEAR = "linear"
    STATIC_BRIDGE = "static_bridge"


class LoopReuseMode(str, enum.Enum):
    UNIDIRECTIONAL = "uni"
    BIDIRECTIONAL = "bi"


class PartitionStrategy(str, enum.Enum):
    TOPOLOGY = "topology"
    PARALLAX = "parallax"
    TEMPORAL = "temporal"


@dataclass(frozen=True)
class BaseSegment:
    keyframes: Tuple[int, ...]
    kind: SegmentKind
    states: Tuple[MotionState, ...] = ()

    def __post_init__(self):
        keyframes = tuple(int(k) for k in self.keyframes)
        if not keyframes:
            raise InvalidArgumentError("a base segment needs at least one keyframe")
        if any(b <= a for a, b in zip(keyframes, keyframes[1:])):
            raise InvalidArgumentError("segment keyframes must be strictly increasing")
        object.__setattr__(self, "keyframes", keyframes)

    def __len__(self) -> int:
        return len(self.keyframes)

    @property
    def first(self) -> int:
        return self.keyframes[0]

    @property
    def last(self) -> int:
        return self.keyframes[-1]


@dataclass(frozen=True)
class LoopHit:
    """A historical keyframe retrieved for a submap, and the keyframe that found it"""

    segment: int
    historical: int
    query: int
    historical_segment: int
    distance: float = 0.0


@dataclass(frozen=True)
class Submap:
    id: int
    base: BaseSegment
    overlap_frames: Tuple[int, ...] = ()
    loop_frames: Tuple[int, ...] = ()
    # current keyframes re-inferred inside this (historical) submap's context
    reinjected_frames: Tuple[int, ...] = ()
    loop_query: Optional[int] = None
    historical_submap: Optional[int] = None

    def __post_init__(self):
        base = set(self.base.keyframes)
        if base & set(self.loop_frames):
            raise InvalidArgumentError(f"submap {self.id}: loop frames overlap the base segment")
        if self.loop_frames and max(self.loop_frames) >= self.base.first:
            raise InvalidArgumentError(f"submap {self.id}: loop frames must precede the base segment")
        if self.overlap_frames and min(self.overlap_frames) <= self.base.last:
            raise InvalidArgumentError(f"submap {self.id}: overlap frames must follow the base segment")

    @property
    def frames(self) -> Tuple[int, ...]:
        """All frames inferred in this submap's own context, ordered"""
        return tuple(self.loop_frames) + self.base.keyframes + tuple(self.overlap_frames)

    @property
    def historical_context_frames(self) -> Tuple[int, ...]:
        """Frames when this submap is re-inferred with injected current keyframes"""
        return tuple(sorted(set(self.frames) | set(self.reinjected_frames)))

    @property
    def kind(self) -> SegmentKind:
        return self.base.kind

    @property
    def origin_frame(self) -> int:
        return self.base.first


@dataclass
class PartitionResult:
    keyframes: Tuple[int, ...]
    segments: Tuple[BaseSegment, ...]
    submaps: Tuple[Submap, ...]
    loop_hits: Tuple[LoopHit, ...] = ()
    warnings: Tuple[str, ...] = field(default_factory=tuple)
