"""
Tests for flow statistics, smoothing and motion-state classification
Run with: pytest tests/
"""
import math

import numpy as np
import pandas as pd
import pytest

from app.exceptions import DataIntegrityError, InvalidArgumentError
from app.models.motion import FlowField, MotionState
from app.schemas.motion import MotionParams
from app.schemas.world import WorldConfig
from app.services.motion_service import MotionService
from app.services.synthetic_service import SyntheticWorldService


def field(fx, fy=None, width=None, height=1):
    fx = np.asarray(fx, dtype=float)
    fy = np.zeros_like(fx) if fy is None else np.asarray(fy, dtype=float)
    return FlowField(width=width or fx.size // height, height=height, fx=fx, fy=fy)


def test_static_ratio():
    """Fraction of pixels strictly below the flow threshold"""
    assert MotionService.static_ratio(field(np.zeros(6)), 0.7) == 1.0
    assert MotionService.static_ratio(field([0.1, 0.5, 1.0, 2.0], width=2, height=2), 0.7) == 0.5
    assert MotionService.static_ratio(field(np.full(4, 0.7)), 0.7) == 0.0


def test_turning_score():
    """Mean absolute horizontal flow; vertical flow is ignored"""
    assert MotionService.turning_score(field(np.full(8, 2.0))) == 2.0
    assert MotionService.turning_score(field(np.zeros(4), np.full(4, 5.0))) == 0.0
    assert MotionService.turning_score(field([-2.0, 2.0, 0.0, 4.0])) == 2.0


def test_statistics_are_permutation_invariant(rng):
    """Shuffling pixels does not change the statistics"""
    fx, fy = rng.normal(size=100), rng.normal(size=100)
    order = rng.permutation(100)
    a = MotionService.frame_statistics(field(fx, fy), 0.7)
    b = MotionService.frame_statistics(field(fx[order], fy[order]), 0.7)
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_flow_field_validation():
    """Wrong sizes and non-finite entries are refused"""
    with pytest.raises(InvalidArgumentError):
        FlowField(width=2, height=2, fx=np.zeros(3), fy=np.zeros(4))
    with pytest.raises(InvalidArgumentError):
        FlowField(width=1, height=1, fx=np.array([np.inf]), fy=np.zeros(1))
    with pytest.raises(InvalidArgumentError):
        MotionService.static_ratio(field(np.zeros(2)), 0.0)


def test_smooth_constant_and_identity(rng):
    """Constant series stay constant and sigma 0 is the identity"""
    np.testing.assert_allclose(MotionService.smooth_profile(np.full(30, 3.5), 2.0), 3.5, atol=1e-12)
    series = rng.normal(size=25)
    np.testing.assert_array_equal(MotionService.smooth_profile(series, 0.0), series)


def test_smooth_impulse_matches_kernel():
    """An impulse reproduces the truncated normalised Gaussian"""
    impulse = np.zeros(9)
    impulse[4] = 1.0
    x = np.arange(-3, 4, dtype=float)
    kernel = np.exp(-0.5 * x**2)
    kernel /= kernel.sum()
    smoothed = MotionService.smooth_profile(impulse, 1.0)
    assert smoothed.size == 9
    np.testing.assert_allclose(smoothed[1:8], kernel, atol=1e-15)
    assert smoothed[0] == 0.0 and smoothed[8] == 0.0


def test_smooth_stays_within_range(rng):
    """A non-negative kernel never leaves the range of the input"""
    series = rng.uniform(-2.0, 5.0, size=60)
    smoothed = MotionService.smooth_profile(series, 2.0)
    assert smoothed.min() >= series.min() - 1e-12
    assert smoothed.max() <= series.max() + 1e-12


def test_classify_cascade():
    """Static dominates turning, which dominates linear"""
    params = MotionParams()
    states = MotionService.classify_states([0.8, 0.3, 0.3], [9.0, 6.0, 2.0], params)
    assert states == [MotionState.STATIC, MotionState.TURNING, MotionState.LINEAR]


def test_classify_invariant_under_small_offsets():
    """Shifts well inside the threshold margins keep every label"""
    params = MotionParams()
    static = np.array([0.95, 0.1, 0.2, 0.9])
    turn = np.array([12.0, 11.0, 1.0, 0.5])
    base = MotionService.classify_states(static, turn, params)
    assert base == MotionService.classify_states(static + 0.02, turn + 0.3, params)


def test_parallax_accumulate():
    """Sums per-frame mean flow over the half-open interval"""
    means = [0.0, 3.0, 4.0, 5.0]
    assert MotionService.parallax_accumulate(means, 2, 2) == 0.0
    assert MotionService.parallax_accumulate(means, 0, 3) == 12.0
    assert MotionService.parallax_accumulate(means, 0, 1) + MotionService.parallax_accumulate(
        means, 1, 3
    ) == MotionService.parallax_accumulate(means, 0, 3)
    assert MotionService.parallax_accumulate(np.full(50, 1e-4), 0, 49) < 15.0
    with pytest.raises(InvalidArgumentError):
        MotionService.parallax_accumulate(means, 3, 1)
    with pytest.raises(InvalidArgumentError):
        MotionService.parallax_accumulate(means, 0, 4)


def test_flow_stats_file_roundtrip(tmp_path):
    """Statistics written to disk come back unchanged"""
    table = pd.DataFrame(
        {
            "frame_index": [0, 1, 2],
            "mean_flow_mag": [0.0, 1.25, 3.5],
            "static_ratio_raw": [1.0, 0.5, 0.1],
            "turning_score_raw": [0.0, 0.75, 6.0],
        }
    )
    path = tmp_path / "flow_stats.csv"
    MotionService.save_flow_stats(table, path)
    loaded = MotionService.load_flow_stats(path)
    pd.testing.assert_frame_equal(loaded, table, check_dtype=False)


def test_flow_stats_file_must_cover_every_frame(tmp_path):
    """Gaps in frame indices are a data error"""
    path = tmp_path / "flow_stats.csv"
    path.write_text(
        "frame_index,mean_flow_mag,static_ratio_raw,turning_score_raw\n0,1,0.5,1\n2,1,0.5,1\n",
        encoding="utf-8",
    )
    with pytest.raises(DataIntegrityError):
        MotionService.load_flow_stats(path)


@pytest.mark.parametrize("preset", ["stop_and_go", "square_loop"])
def test_states_match_ground_truth_away_from_transitions(preset):
    """Synthetic labels are reproduced outside the smoothing band around label changes"""
    params = MotionParams()
    world = SyntheticWorldService.generate_world(WorldConfig(preset=preset))
    profile = MotionService.build_profile(world.flow_stats, params)
    band = int(math.ceil(3 * params.smoothing_sigma))
    labels = world.gt_states
    checked = 0
    for t, label in enumerate(labels):
        window = labels[max(0, t - band) : t + band + 1]
        if any(other != label for other in window):
            continue
        assert profile.states[t] == label, f"frame {t}"
        checked += 1
    assert checked > len(labels) // 2
