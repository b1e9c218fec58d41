import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import InsufficientAssociationError, InvalidArgumentError
from app.models.sim3 import Sim3
from app.models.trajectory import Trajectory
from app.schemas.metrics import DEFAULT_SEGMENT_LENGTHS, MetricReport
from app.utils.alignment import weighted_umeyama

logger = logging.getLogger(__name__)

MAX_TIME_DIFFERENCE = 0.05  # s
MIN_MATCHES = 3


class MetricsService:
    """Trajectory association, Sim(3) alignment, ATE and segment drift"""

    @staticmethod
    def associate(
        estimate: Trajectory, reference: Trajectory, max_difference: float = MAX_TIME_DIFFERENCE
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        One-to-one nearest-timestamp matching. Candidate pairs within
        `max_difference` are taken greedily by increasing time gap.
        Returns index arrays (estimate, reference) in estimate order.
        """
        if max_difference <= 0:
            raise InvalidArgumentError("max_difference must be positive")
        t_est, t_ref = estimate.timestamps, reference.timestamps
        lo = np.searchsorted(t_ref, t_est - max_difference, side="left")
        hi = np.searchsorted(t_ref, t_est + max_difference, side="right")
        candidates = [
            (abs(t_est[a] - t_ref[b]), a, b)
            for a in range(t_est.size)
            for b in range(lo[a], hi[a])
            if abs(t_est[a] - t_ref[b]) < max_difference
        ]
        candidates.sort()
        used_est, used_ref = set(), set()
        matches = []
        for _, a, b in candidates:
            if a in used_est or b in used_ref:
                continue
            used_est.add(a)
            used_ref.add(b)
            matches.append((a, b))
        matches.sort()
        est_idx = np.array([a for a, _ in matches], dtype=int)
        ref_idx = np.array([b for _, b in matches], dtype=int)
        return est_idx, ref_idx

    @staticmethod
    def matched_pair(
        estimate: Trajectory, reference: Trajectory, max_difference: float = MAX_TIME_DIFFERENCE
    ) -> Tuple[Trajectory, Trajectory]:
        est_idx, ref_idx = MetricsService.associate(estimate, reference, max_difference)
        if est_idx.size < MIN_MATCHES:
            raise InsufficientAssociationError(
                f"{est_idx.size} poses matched within {max_difference} s, at least {MIN_MATCHES} required"
            )
        return estimate.subset(est_idx), reference.subset(ref_idx)

    @staticmethod
    def align_sim3(
        estimate: Trajectory, reference: Trajectory, max_difference: float = MAX_TIME_DIFFERENCE
    ) -> Sim3:
        """Similarity mapping estimate positions onto reference positions"""
        est, ref = MetricsService.matched_pair(estimate, reference, max_difference)
        return weighted_umeyama(est.positions, ref.positions, min_rank=1)

    @staticmethod
    def ate_rmse(
        estimate: Trajectory, reference: Trajectory, max_difference: float = MAX_TIME_DIFFERENCE
    ) -> float:
        est, ref = MetricsService.matched_pair(estimate, reference, max_difference)
        S = weighted_umeyama(est.positions, ref.positions, min_rank=1)
        errors = S.apply(est.positions) - ref.positions
        return float(np.sqrt(np.mean(np.sum(errors * errors, axis=1))))

    @staticmethod
    def segment_errors(
        estimate: Trajectory,
        reference: Trajectory,
        segment_lengths: Optional[Sequence[float]] = None,
        stride: int = 1,
    ) -> List[Tuple[int, float, float]]:
        """
        (first index, segment length, translation error / length) for every
        start pose (every `stride`-th) and length that fits the reference.
        Trajectories must already be associated pose by pose.
        """
        if len(estimate) != len(reference):
            raise InvalidArgumentError("segment errors need associated trajectories of equal length")
        if stride < 1:
            raise InvalidArgumentError("stride must be at least 1")
        lengths = list(DEFAULT_SEGMENT_LENGTHS if segment_lengths is None else segment_lengths)
        if any(L <= 0 for L in lengths):
            raise InvalidArgumentError("segment lengths must be positive")
        dist = reference.path_lengths()
        ref_poses = reference.matrices()
        est_poses = estimate.matrices()
        errors = []
        for first in range(0, len(reference), stride):
            for length in lengths:
                last = int(np.searchsorted(dist, dist[first] + length, side="left"))
                if last >= len(reference):
                    continue
                ref_delta = np.linalg.inv(ref_poses[first]) @ ref_poses[last]
                est_delta = np.linalg.inv(est_poses[first]) @ est_poses[last]
                pose_error = np.linalg.inv(est_delta) @ ref_delta
                errors.append((first, float(length), float(np.linalg.norm(pose_error[:3, 3])) / length))
        return errors

    @staticmethod
    def translation_drift(
        estimate: Trajectory,
        reference: Trajectory,
        segment_lengths: Optional[Sequence[float]] = None,
        stride: int = 1,
    ) -> Optional[float]:
        """Mean relative segment translation error in percent; None when no segment length fits"""
        errors = MetricsService.segment_errors(estimate, reference, segment_lengths, stride)
        if not errors:
            return None
        return 100.0 * float(np.mean([e for _, _, e in errors]))

    @staticmethod
    def evaluate(
        estimate: Trajectory,
        reference: Trajectory,
        segment_lengths: Optional[Sequence[float]] = None,
        stride: int = 1,
        max_difference: float = MAX_TIME_DIFFERENCE,
    ) -> MetricReport:
        """ATE after Sim(3) alignment, drift of the aligned estimate"""
        est, ref = MetricsService.matched_pair(estimate, reference, max_difference)
        S = weighted_umeyama(est.positions, ref.positions, min_rank=1)
        aligned = est.transformed(S)
        residuals = aligned.positions - ref.positions
        ate = float(np.sqrt(np.mean(np.sum(residuals * residuals, axis=1))))
        lengths = list(DEFAULT_SEGMENT_LENGTHS if segment_lengths is None else segment_lengths)
        errors = MetricsService.segment_errors(aligned, ref, lengths, stride)
        drift = 100.0 * float(np.mean([e for _, _, e in errors])) if errors else None
        used = sorted({length for _, length, _ in errors})
        if drift is None:
            logger.warning("reference path %.1f m is shorter than every drift segment", ref.path_lengths()[-1])
        report = MetricReport(
            ate_rmse_m=ate,
            drift_pct=drift,
            matched_poses=len(est),
            unmatched_poses=len(estimate) - len(est),
            segments_evaluated=len(errors),
            segment_lengths=used,
            alignment_scale=S.scale,
        )
        logger.info(
            "metrics ate=%.6f m drift=%s matched=%d segments=%d",
            ate,
            "n/a" if drift is None else f"{drift:.4f}%",
            report.matched_poses,
            report.segments_evaluated,
        )
        return report
