import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import InvalidArgumentError
from app.models.motion import MotionState
from app.models.submap import (
    BaseSegment,
    LoopHit,
    LoopReuseMode,
    PartitionResult,
    PartitionStrategy,
    SegmentKind,
    Submap,
)
from app.schemas.partition import PartitionParams, PartitionRow
from app.services.motion_service import MotionService

logger = logging.getLogger(__name__)


class PartitionService:
    """Keyframe selection, segment slicing and submap composition"""

    @staticmethod
    def is_static_boundary(t: int, states: Sequence[MotionState], omega: int) -> bool:
        """Static frame within omega frames of a non-static frame"""
        n = len(states)
        if not 0 <= t < n:
            raise InvalidArgumentError(f"frame {t} is outside a sequence of {n} frames")
        if states[t] != MotionState.STATIC:
            return False
        lo, hi = max(0, t - omega), min(n - 1, t + omega)
        return any(states[u] != MotionState.STATIC for u in range(lo, hi + 1))

    @staticmethod
    def select_keyframes(
        states: Sequence[MotionState], flow_means: Sequence[float], params: PartitionParams
    ) -> List[int]:
        """Redundancy filtering: static runs keep only their boundary frames, dynamic frames need parallax.

        With static_pruning off static frames face the parallax gate like any
        other frame. With redundancy_filtering off every frame is a keyframe.
        """
        n = len(states)
        if len(flow_means) != n:
            raise InvalidArgumentError("flow means and states differ in length")
        if n == 0:
            return []
        if not params.redundancy_filtering:
            return list(range(n))
        keyframes = [0]
        t_last = 0
        for t in range(1, n):
            if params.static_pruning and states[t] == MotionState.STATIC:
                at_end = t == n - 1
                if at_end or PartitionService.is_static_boundary(t, states, params.omega):
                    keyframes.append(t)
                    t_last = t
            elif MotionService.parallax_accumulate(flow_means, t_last, t) > params.tau_palx:
                keyframes.append(t)
                t_last = t
        return keyframes

    @staticmethod
    def segment_kind(states: Sequence[MotionState]) -> SegmentKind:
        if MotionState.TURNING in states:
            return SegmentKind.TURNING
        if all(s == MotionState.STATIC for s in states):
            return SegmentKind.STATIC_BRIDGE
        return SegmentKind.LINEAR

    @staticmethod
    def slice_keyframes(
        keyframes: Sequence[int], states: Sequence[MotionState], n_max: int
    ) -> List[BaseSegment]:
        selected = set(keyframes)
        segments: List[BaseSegment] = []
        current: List[int] = []

        def finalize():
            if current:
                seg_states = tuple(states[k] for k in current)
                segments.append(BaseSegment(tuple(current), PartitionService.segment_kind(seg_states), seg_states))

        s_prev = states[0] if len(states) else None
        for t, s in enumerate(states):
            if t in selected:
                if s == MotionState.TURNING:
                    current.append(t)
                else:
                    if len(current) >= n_max or s_prev == MotionState.TURNING:
                        finalize()
                        current = []
                    current.append(t)
            s_prev = s
        finalize()
        return segments

    @staticmethod
    def _segments_from_groups(groups: Sequence[Sequence[int]], states: Sequence[MotionState]) -> List[BaseSegment]:
        segments = []
        for group in groups:
            if group:
                seg_states = tuple(states[k] for k in group)
                segments.append(BaseSegment(tuple(group), PartitionService.segment_kind(seg_states), seg_states))
        return segments

    @staticmethod
    def slice_temporal(keyframes: Sequence[int], states: Sequence[MotionState], n_max: int) -> List[BaseSegment]:
        """Consecutive chunks of n_max keyframes regardless of motion state"""
        keyframes = list(keyframes)
        groups = [keyframes[a : a + n_max] for a in range(0, len(keyframes), n_max)]
        return PartitionService._segments_from_groups(groups, states)

    @staticmethod
    def slice_parallax(
        keyframes: Sequence[int],
        states: Sequence[MotionState],
        flow_means: Sequence[float],
        n_max: int,
        budget: float,
    ) -> List[BaseSegment]:
        """
        Cut a segment once the parallax accumulated from its first keyframe
        would exceed `budget`, or once it holds n_max keyframes.
        """
        groups: List[List[int]] = []
        current: List[int] = []
        for t in keyframes:
            if current and (
                len(current) >= n_max or MotionService.parallax_accumulate(flow_means, current[0], t) > budget
            ):
                groups.append(current)
                current = []
            current.append(t)
        groups.append(current)
        return PartitionService._segments_from_groups(groups, states)

    @staticmethod
    def slice_segments(
        keyframes: Sequence[int],
        states: Sequence[MotionState],
        flow_means: Sequence[float],
        params: PartitionParams,
    ) -> List[BaseSegment]:
        if params.strategy == PartitionStrategy.TEMPORAL:
            return PartitionService.slice_temporal(keyframes, states, params.n_max)
        if params.strategy == PartitionStrategy.PARALLAX:
            return PartitionService.slice_parallax(
                keyframes, states, flow_means, params.n_max, params.segment_parallax_budget
            )
        return PartitionService.slice_keyframes(keyframes, states, params.n_max)

    @staticmethod
    def partition_sequence(
        frames: int, states: Sequence[MotionState], flow_means: Sequence[float], params: PartitionParams
    ) -> List[BaseSegment]:
        if len(states) != frames:
            raise InvalidArgumentError(f"expected {frames} motion states, got {len(states)}")
        if frames == 0:
            return []
        keyframes = PartitionService.select_keyframes(states, flow_means, params)
        return PartitionService.slice_segments(keyframes, states, flow_means, params)

    @staticmethod
    def retrieve_loop_candidates(
        current_position: np.ndarray,
        history: Sequence[Tuple[int, np.ndarray]],
        params: PartitionParams,
        current_frame: Optional[int] = None,
    ) -> Optional[int]:
        """Closest historical keyframe within loop_radius and beyond loop_min_gap frames"""
        position = np.asarray(current_position, dtype=float)
        if not np.all(np.isfinite(position)):
            raise InvalidArgumentError("current position must be finite")
        best: Optional[Tuple[float, int]] = None
        for keyframe, hist_position in history:
            if current_frame is not None and abs(current_frame - keyframe) <= params.loop_min_gap:
                continue
            distance = float(np.linalg.norm(np.asarray(hist_position, dtype=float) - position))
            if distance >= params.loop_radius:
                continue
            if best is None or (distance, keyframe) < best:
                best = (distance, keyframe)
        return None if best is None else best[1]

    @staticmethod
    def find_loop_hits(
        segments: Sequence[BaseSegment], positions: np.ndarray, params: PartitionParams
    ) -> Dict[int, LoopHit]:
        """
        Query every base keyframe of segment k against segments older than
        k-1. The keyframe retrieved for segment k-1 is not offered again to
        segment k, so consecutive submaps never share a loop frame.
        """
        hits: Dict[int, LoopHit] = {}
        owner = {kf: i for i, seg in enumerate(segments) for kf in seg.keyframes}
        for k, segment in enumerate(segments):
            taken = hits[k - 1].historical if k - 1 in hits else None
            history = [
                (kf, positions[kf])
                for seg in segments[: max(0, k - 1)]
                for kf in seg.keyframes
                if kf != taken
            ]
            if not history:
                continue
            best: Optional[Tuple[float, int, int]] = None
            for query in segment.keyframes:
                found = PartitionService.retrieve_loop_candidates(positions[query], history, params, query)
                if found is None:
                    continue
                distance = float(np.linalg.norm(positions[found] - positions[query]))
                if best is None or (distance, found, query) < best:
                    best = (distance, found, query)
            if best is not None:
                distance, historical, query = best
                hits[k] = LoopHit(k, historical, query, owner[historical], distance)
        return hits

    @staticmethod
    def drop_repeated_loop_frames(loop_hits: Dict[int, LoopHit]) -> Tuple[Dict[int, LoopHit], List[str]]:
        """A hit reusing the loop frame kept for the previous submap is dropped"""
        kept: Dict[int, LoopHit] = {}
        warnings: List[str] = []
        for k in sorted(loop_hits):
            hit = loop_hits[k]
            previous = kept.get(k - 1)
            if previous is not None and previous.historical == hit.historical:
                message = f"submap {k}: loop frame {hit.historical} already anchors submap {k - 1}, dropped"
                logger.warning(message)
                warnings.append(message)
                continue
            kept[k] = hit
        return kept, warnings

    @staticmethod
    def compose_submaps(
        segments: Sequence[BaseSegment],
        all_keyframes: Sequence[int],
        params: PartitionParams,
        loop_hits: Optional[Dict[int, LoopHit]] = None,
    ) -> Tuple[List[Submap], List[str]]:
        """Attach overlap anchors (first n_ovlp keyframes of the next segment) and loop anchors"""
        selected = set(all_keyframes)
        for segment in segments:
            if not set(segment.keyframes) <= selected:
                raise InvalidArgumentError("segment keyframes must come from the keyframe list")
        loop_hits, warnings = PartitionService.drop_repeated_loop_frames(loop_hits or {})
        overlaps: List[Tuple[int, ...]] = []
        for k in range(len(segments)):
            if k + 1 < len(segments):
                following = segments[k + 1].keyframes
                if len(following) < params.n_ovlp:
                    message = (
                        f"submap {k}: next segment has {len(following)} keyframes, "
                        f"overlap shrunk from {params.n_ovlp}"
                    )
                    logger.warning(message)
                    warnings.append(message)
                overlaps.append(following[: params.n_ovlp])
            else:
                overlaps.append(())

        reinjected: Dict[int, List[int]] = {}
        if params.loop_reuse_mode == LoopReuseMode.BIDIRECTIONAL:
            for hit in loop_hits.values():
                reinjected.setdefault(hit.historical_segment, []).append(hit.query)

        submaps = []
        for k, segment in enumerate(segments):
            hit = loop_hits.get(k)
            submaps.append(
                Submap(
                    id=k,
                    base=segment,
                    overlap_frames=tuple(overlaps[k]),
                    loop_frames=(hit.historical,) if hit else (),
                    reinjected_frames=tuple(sorted(reinjected.get(k, []))),
                    loop_query=hit.query if hit else None,
                    historical_submap=hit.historical_segment if hit else None,
                )
            )
        return submaps, warnings

    @staticmethod
    def partition(
        states: Sequence[MotionState],
        flow_means: Sequence[float],
        params: PartitionParams,
        positions: Optional[np.ndarray] = None,
        loop_hits: Optional[Dict[int, LoopHit]] = None,
    ) -> PartitionResult:
        """Full partition pass. Loop hits come from `positions` unless given explicitly"""
        keyframes = PartitionService.select_keyframes(states, flow_means, params) if len(states) else []
        segments = PartitionService.slice_segments(keyframes, states, flow_means, params)
        if not params.loop_detection:
            loop_hits = {}
        elif loop_hits is None:
            loop_hits = (
                PartitionService.find_loop_hits(segments, np.asarray(positions, dtype=float), params)
                if positions is not None
                else {}
            )
        loop_hits, loop_warnings = PartitionService.drop_repeated_loop_frames(loop_hits)
        submaps, warnings = PartitionService.compose_submaps(segments, keyframes, params, loop_hits)
        logger.info(
            "partition frames=%d keyframes=%d submaps=%d loops=%d strategy=%s",
            len(states),
            len(keyframes),
            len(submaps),
            len(loop_hits),
            params.strategy.value,
        )
        return PartitionResult(
            keyframes=tuple(keyframes),
            segments=tuple(segments),
            submaps=tuple(submaps),
            loop_hits=tuple(loop_hits[k] for k in sorted(loop_hits)),
            warnings=tuple(loop_warnings + warnings),
        )

    @staticmethod
    def report_rows(result: PartitionResult) -> List[PartitionRow]:
        return [
            PartitionRow(
                submap_id=s.id,
                kind=s.kind.value,
                first_kf=s.base.first,
                last_kf=s.base.last,
                n_keyframes=len(s.base),
                n_overlap=len(s.overlap_frames),
                loop_frame=s.loop_frames[0] if s.loop_frames else -1,
                query_frame=s.loop_query,
            )
            for s in result.submaps
        ]
