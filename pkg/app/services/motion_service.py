import logging
import math
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import ndimage

from app.exceptions import DataIntegrityError, InvalidArgumentError
from app.models.geometry import FLOW_STAT_COLUMNS
from app.models.motion import FlowField, MotionProfile, MotionState
from app.schemas.motion import MotionParams

logger = logging.getLogger(__name__)


class MotionService:
    """Flow statistics, smoothed motion profiles and per-frame motion states"""

    @staticmethod
    def static_ratio(flow: FlowField, tau_flow: float) -> float:
        """Fraction of pixels whose flow magnitude is strictly below tau_flow"""
        if tau_flow <= 0:
            raise InvalidArgumentError("tau_flow must be positive")
        return float(np.mean(flow.magnitude < tau_flow))

    @staticmethod
    def turning_score(flow: FlowField) -> float:
        """Mean absolute horizontal flow"""
        return float(np.mean(np.abs(flow.fx)))

    @staticmethod
    def frame_statistics(flow: FlowField, tau_flow: float) -> Tuple[float, float, float]:
        """(mean_flow_mag, static_ratio_raw, turning_score_raw) of one frame"""
        return (
            float(np.mean(flow.magnitude)),
            MotionService.static_ratio(flow, tau_flow),
            MotionService.turning_score(flow),
        )

    @staticmethod
    def gaussian_kernel(sigma: float) -> np.ndarray:
        radius = int(math.ceil(3.0 * sigma))
        x = np.arange(-radius, radius + 1, dtype=float)
        kernel = np.exp(-0.5 * (x / sigma) ** 2)
        return kernel / kernel.sum()

    @staticmethod
    def smooth_profile(series: Sequence[float], sigma: float) -> np.ndarray:
        """Truncated (+-ceil(3 sigma)) normalised Gaussian, reflect padding"""
        values = np.asarray(series, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise InvalidArgumentError("smoothing needs a non-empty 1-D series")
        if sigma < 0:
            raise InvalidArgumentError("sigma must be non-negative")
        if sigma == 0:
            return values.copy()
        return ndimage.correlate1d(values, MotionService.gaussian_kernel(sigma), mode="reflect")

    @staticmethod
    def classify_states(
        smoothed_static: Sequence[float], smoothed_turn: Sequence[float], params: MotionParams
    ) -> List[MotionState]:
        static = np.asarray(smoothed_static, dtype=float)
        turn = np.asarray(smoothed_turn, dtype=float)
        if static.shape != turn.shape:
            raise InvalidArgumentError("static and turning series differ in length")
        states = []
        for s, m in zip(static, turn):
            if s > params.tau_static:
                states.append(MotionState.STATIC)
            elif m > params.tau_turn:
                states.append(MotionState.TURNING)
            else:
                states.append(MotionState.LINEAR)
        return states

    @staticmethod
    def parallax_accumulate(flow_means: Sequence[float], from_frame: int, to_frame: int) -> float:
        """Sum of per-frame mean flow magnitudes over (from_frame, to_frame]"""
        n = len(flow_means)
        if not 0 <= from_frame <= to_frame < n:
            raise InvalidArgumentError(
                f"parallax interval ({from_frame}, {to_frame}] is outside a sequence of {n} frames"
            )
        return float(np.sum(np.asarray(flow_means[from_frame + 1 : to_frame + 1], dtype=float)))

    @staticmethod
    def build_profile(flow_stats: pd.DataFrame, params: MotionParams) -> MotionProfile:
        """Smooth the raw statistics and classify every frame"""
        static_raw = flow_stats["static_ratio_raw"].to_numpy(dtype=float)
        turn_raw = flow_stats["turning_score_raw"].to_numpy(dtype=float)
        smoothed_static = MotionService.smooth_profile(static_raw, params.smoothing_sigma)
        smoothed_turn = MotionService.smooth_profile(turn_raw, params.smoothing_sigma)
        states = MotionService.classify_states(smoothed_static, smoothed_turn, params)
        profile = MotionProfile(static_raw, turn_raw, smoothed_static, smoothed_turn, states)
        logger.info(
            "motion profile frames=%d static=%d turning=%d linear=%d",
            len(states),
            states.count(MotionState.STATIC),
            states.count(MotionState.TURNING),
            states.count(MotionState.LINEAR),
        )
        return profile

    @staticmethod
    def statistics_table(flows: Sequence[FlowField], tau_flow: float) -> pd.DataFrame:
        rows = [(i,) + MotionService.frame_statistics(f, tau_flow) for i, f in enumerate(flows)]
        return pd.DataFrame(rows, columns=FLOW_STAT_COLUMNS)

    @staticmethod
    def load_flow_stats(path: Union[str, Path]) -> pd.DataFrame:
        try:
            table = pd.read_csv(path, comment="#", skipinitialspace=True)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise DataIntegrityError(f"cannot read flow statistics {path}: {exc}") from exc
        missing = [c for c in FLOW_STAT_COLUMNS if c not in table.columns]
        if missing:
            raise DataIntegrityError(f"flow statistics {path} lack columns {missing}")
        table = table[FLOW_STAT_COLUMNS].sort_values("frame_index").reset_index(drop=True)
        if not np.array_equal(table["frame_index"].to_numpy(), np.arange(len(table))):
            raise DataIntegrityError(f"flow statistics {path} must cover frames 0..N-1 exactly once")
        if not np.all(np.isfinite(table[FLOW_STAT_COLUMNS[1:]].to_numpy(dtype=float))):
            raise DataIntegrityError(f"flow statistics {path} contain non-finite values")
        return table

    @staticmethod
    def save_flow_stats(table: pd.DataFrame, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write("# " + ",".join(FLOW_STAT_COLUMNS) + "\n")
            table[FLOW_STAT_COLUMNS].to_csv(handle, index=False, float_format="%.17g")
