import logging
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from app.exceptions import InsufficientCorrespondencesError, InvalidArgumentError, MissingAnchorError
from app.models.geometry import SubmapGeometry
from app.models.registration import (
    AnchorKind,
    AnchorSpec,
    EdgeKind,
    RegistrationResult,
    Sim3Edge,
    ValidMask,
)
from app.models.sim3 import Sim3
from app.schemas.registration import RegistrationParams
from app.utils.alignment import weighted_umeyama

logger = logging.getLogger(__name__)

MAD_TO_SIGMA = 1.4826
HUBER_TUNING = 1.345
# robust scale never drops below this fraction of the target spread
SCALE_FLOOR = 1e-9


def huber_cost(residuals: np.ndarray, delta: float) -> float:
    r = np.abs(residuals)
    quadratic = r <= delta
    return float(np.sum(np.where(quadratic, 0.5 * r * r, delta * (r - 0.5 * delta))))


def huber_weights(residuals: np.ndarray, delta: float) -> np.ndarray:
    r = np.abs(residuals)
    return np.where(r <= delta, 1.0, delta / np.where(r > 0, r, 1.0))


class RegistrationService:
    """Anchor selection, validity masking and robust pixel-indexed Sim(3) estimation"""

    @staticmethod
    def select_overlap_anchor(overlap: Sequence[int], window: int) -> AnchorSpec:
        """`window` frames centred on index floor((n-1)/2) of the overlap, lower-centred on ties"""
        frames = list(overlap)
        if not frames:
            raise MissingAnchorError("overlap is empty, no anchor can be formed")
        if window < 1:
            raise InvalidArgumentError("anchor window must be at least 1")
        n = len(frames)
        width = min(int(window), n)
        center = (n - 1) // 2
        start = center - (width - 1) // 2
        start = max(0, min(start, n - width))
        return AnchorSpec(AnchorKind.OVERLAP, tuple(frames[start : start + width]))

    @staticmethod
    def overlap_anchor(overlap: Sequence[int], params: RegistrationParams) -> AnchorSpec:
        """Central window in anchor alignment, the whole overlap in dense_overlap alignment"""
        if params.alignment == "dense_overlap":
            if not overlap:
                raise MissingAnchorError("overlap is empty, no anchor can be formed")
            return AnchorSpec(AnchorKind.OVERLAP, tuple(int(f) for f in overlap))
        return RegistrationService.select_overlap_anchor(overlap, params.anchor_window)

    @staticmethod
    def loop_anchor(frame: int) -> AnchorSpec:
        return AnchorSpec(AnchorKind.LOOP, (int(frame),))

    @staticmethod
    def build_valid_mask(conf_i: np.ndarray, conf_j: np.ndarray, sky: np.ndarray, tau_conf: float) -> ValidMask:
        """min(C_i, C_j) strictly above its tau_conf quantile over non-sky pixels (lower interpolation)"""
        conf_i = np.asarray(conf_i, dtype=float)
        conf_j = np.asarray(conf_j, dtype=float)
        sky = np.asarray(sky, dtype=bool)
        if conf_i.shape != conf_j.shape or conf_i.shape != sky.shape:
            raise InvalidArgumentError("confidence and sky grids must share their dimensions")
        if not 0 < tau_conf < 1:
            raise InvalidArgumentError("tau_conf must lie in (0, 1)")
        m = np.minimum(conf_i, conf_j)
        ground = ~sky
        if not ground.any():
            return ValidMask(np.zeros_like(sky))
        threshold = np.quantile(m[ground], tau_conf, method="lower")
        return ValidMask((m > threshold) & ground)

    @staticmethod
    def valid_mask_for(
        conf_i: np.ndarray, conf_j: np.ndarray, sky: np.ndarray, params: RegistrationParams
    ) -> ValidMask:
        """High-confidence mask in anchor alignment, every non-sky pixel in dense_overlap alignment"""
        if params.alignment == "dense_overlap":
            sky = np.asarray(sky, dtype=bool)
            if np.shape(conf_i) != sky.shape or np.shape(conf_j) != sky.shape:
                raise InvalidArgumentError("confidence and sky grids must share their dimensions")
            return ValidMask(~sky)
        return RegistrationService.build_valid_mask(conf_i, conf_j, sky, params.tau_conf)

    @staticmethod
    def estimate_robust_sim3(
        points_i: np.ndarray,
        points_j: np.ndarray,
        mask: ValidMask,
        params: Optional[RegistrationParams] = None,
    ) -> RegistrationResult:
        """
        Huber-IRLS estimate of the similarity mapping points_i onto points_j
        at the same pixels.

        The Huber threshold follows 1.345 x the MAD scale of the residuals
        but never grows, so the recorded Huber cost is non-increasing. Steps
        that would increase the cost end the iteration.
        """
        params = params or RegistrationParams()
        src = np.asarray(points_i, dtype=float).reshape(-1, 3)
        dst = np.asarray(points_j, dtype=float).reshape(-1, 3)
        valid = mask.mask.reshape(-1)
        if src.shape != dst.shape or valid.size != src.shape[0]:
            raise InvalidArgumentError("point grids and mask must share their dimensions")
        if mask.count < params.min_valid:
            raise InsufficientCorrespondencesError(
                f"{mask.count} valid correspondences, at least {params.min_valid} required"
            )
        x, y = src[valid], dst[valid]
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidArgumentError("valid pixels must carry finite points")
        n = x.shape[0]

        spread = float(np.sqrt(np.mean(np.sum((y - y.mean(axis=0)) ** 2, axis=1))))
        floor = max(SCALE_FLOOR * spread, np.finfo(float).tiny)

        def residuals_of(S: Sim3) -> np.ndarray:
            return np.linalg.norm(S.apply(x) - y, axis=1)

        def robust_scale(r: np.ndarray) -> float:
            return max(MAD_TO_SIGMA * float(np.median(r)), floor)

        def threshold_for(sigma: float) -> float:
            if params.huber_delta_mode == "fixed":
                return float(params.huber_delta)
            return HUBER_TUNING * sigma

        S = weighted_umeyama(x, y)
        r = residuals_of(S)
        evaluations = n
        sigma = robust_scale(r)
        delta = threshold_for(sigma)
        cost = huber_cost(r, delta)
        history = [cost]
        iterations = 0

        for iteration in range(1, params.max_iters + 1):
            iterations = iteration
            candidate = weighted_umeyama(x, y, huber_weights(r, delta))
            r_new = residuals_of(candidate)
            evaluations += n
            cost_new = huber_cost(r_new, delta)
            if cost_new > cost * (1.0 + 1e-12):
                logger.debug("irls step %d rejected cost=%.6e candidate=%.6e", iteration, cost, cost_new)
                break
            S, r = candidate, r_new
            sigma = robust_scale(r)
            delta = min(delta, threshold_for(sigma))
            cost_next = huber_cost(r, delta)
            change = (cost - cost_next) / max(cost, np.finfo(float).tiny)
            history.append(cost_next)
            logger.debug("irls iter=%d cost=%.6e delta=%.3e", iteration, cost_next, delta)
            cost = cost_next
            if change < 1e-10:
                break

        sigma = robust_scale(r)
        inlier_ratio = float(np.mean(r < params.inlier_cut * sigma))
        return RegistrationResult(
            transform=S,
            inlier_ratio=inlier_ratio,
            iterations=iterations,
            cost_history=history,
            residual_evaluations=evaluations,
            n_valid=n,
        )

    @staticmethod
    def verify_constraint(edge: Sim3Edge, tau_in: float) -> Sim3Edge:
        """accepted iff inlier_ratio >= tau_in; the transform is untouched"""
        return replace(edge, accepted=bool(edge.inlier_ratio >= tau_in))

    @staticmethod
    def anchor_arrays(geometry: SubmapGeometry, frames: Sequence[int]):
        idx = [geometry.index_of(f) for f in frames]
        return geometry.points[idx], geometry.confidences[idx], geometry.sky[idx]

    @staticmethod
    def register_pair(
        geometry_i: SubmapGeometry,
        geometry_j: SubmapGeometry,
        anchor: AnchorSpec,
        params: RegistrationParams,
        kind: EdgeKind = EdgeKind.ODOMETRY,
    ) -> Sim3Edge:
        """
        Edge between submap i and submap j from their predictions of the
        anchor frames. The transform maps submap j coordinates into submap i.
        """
        points_i, conf_i, sky_i = RegistrationService.anchor_arrays(geometry_i, anchor.frames)
        points_j, conf_j, sky_j = RegistrationService.anchor_arrays(geometry_j, anchor.frames)
        mask = RegistrationService.valid_mask_for(conf_i, conf_j, sky_i | sky_j, params)
        result = RegistrationService.estimate_robust_sim3(points_j, points_i, mask, params)
        edge = Sim3Edge(
            from_submap=geometry_i.submap_id,
            to_submap=geometry_j.submap_id,
            transform=result.transform,
            inlier_ratio=result.inlier_ratio,
            kind=kind,
            anchor_frames=anchor.frames,
        )
        edge = RegistrationService.verify_constraint(edge, params.tau_in)
        if not edge.accepted:
            logger.warning(
                "edge %d->%d (%s) rejected: inlier ratio %.3f < %.3f",
                edge.from_submap,
                edge.to_submap,
                kind.value,
                edge.inlier_ratio,
                params.tau_in,
            )
        logger.debug(
            "edge %d->%d kind=%s valid=%d iterations=%d eta=%.3f",
            edge.from_submap,
            edge.to_submap,
            kind.value,
            result.n_valid,
            result.iterations,
            result.inlier_ratio,
        )
        return edge
