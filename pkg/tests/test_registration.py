"""
Tests for anchor selection, validity masks and robust Sim(3) registration
Run with: pytest tests/
"""
import numpy as np
import pytest
from pydantic import ValidationError
from scipy.spatial.transform import Rotation

from app.exceptions import DataIntegrityError, InsufficientCorrespondencesError, MissingAnchorError
from app.models.geometry import ContextRole
from app.models.registration import AnchorKind, EdgeKind, Sim3Edge, ValidMask
from app.models.sim3 import Sim3
from app.models.submap import BaseSegment, SegmentKind, Submap
from app.schemas.registration import RegistrationParams
from app.schemas.world import CorruptionConfig, StraightSegment, WorldConfig
from app.services.registration_service import RegistrationService, huber_cost, huber_weights
from app.services.synthetic_service import SyntheticWorldService

TRUTH = Sim3(2.0, Rotation.from_rotvec(np.radians(30.0) * np.array([0.0, 0.6, 0.8])).as_matrix(), [5.0, 0.0, -1.0])


def full_mask(n):
    return ValidMask(np.ones(n, dtype=bool))


def contaminated(seed, fraction=0.3, n=2000):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-10.0, 10.0, size=(n, 3))
    y = TRUTH.apply(x)
    outliers = rng.choice(n, size=int(fraction * n), replace=False)
    y[outliers] = rng.uniform(y.min(axis=0), y.max(axis=0), size=(outliers.size, 3))
    return x, y


def rotation_error_deg(a: Sim3, b: Sim3) -> float:
    return float(np.degrees(Rotation.from_matrix(a.rotation.T @ b.rotation).magnitude()))


def test_overlap_anchor_selection():
    """Window centred on the lower midpoint, clipped to the overlap"""
    assert RegistrationService.select_overlap_anchor([10, 11, 12, 13, 14], 1).frames == (12,)
    assert RegistrationService.select_overlap_anchor([7], 3).frames == (7,)
    assert RegistrationService.select_overlap_anchor([4, 5, 6, 7], 2).frames == (5, 6)
    anchor = RegistrationService.select_overlap_anchor([10, 11, 12, 13, 14], 3)
    assert anchor.frames == (11, 12, 13)
    assert anchor.kind == AnchorKind.OVERLAP
    with pytest.raises(MissingAnchorError):
        RegistrationService.select_overlap_anchor([], 3)


def test_loop_anchor():
    """A loop anchor is the single reused frame"""
    anchor = RegistrationService.loop_anchor(40)
    assert anchor.kind == AnchorKind.LOOP and anchor.frames == (40,)


def test_mask_all_sky():
    """Sky everywhere leaves nothing valid"""
    conf = np.ones((2, 2))
    assert RegistrationService.build_valid_mask(conf, conf, np.ones((2, 2), bool), 0.5).count == 0


def test_mask_uniform_confidence():
    """Uniform confidences never exceed their own quantile"""
    conf = np.full((3, 3), 0.8)
    assert RegistrationService.build_valid_mask(conf, conf, np.zeros((3, 3), bool), 0.5).count == 0


def test_mask_lower_quantile():
    """Lower interpolation keeps the pixels strictly above the lower midpoint"""
    conf_i = np.array([[1.0, 2.0], [3.0, 9.0]])
    conf_j = np.array([[5.0, 2.0], [3.0, 4.0]])
    mask = RegistrationService.build_valid_mask(conf_i, conf_j, np.zeros((2, 2), bool), 0.5)
    np.testing.assert_array_equal(mask.mask, [[False, False], [True, True]])


def test_mask_conjunction_per_pixel(rng):
    """Every valid pixel is non-sky and above the confidence quantile"""
    conf_i, conf_j = rng.uniform(size=(30, 40)), rng.uniform(size=(30, 40))
    sky = rng.uniform(size=(30, 40)) < 0.2
    mask = RegistrationService.build_valid_mask(conf_i, conf_j, sky, 0.5).mask
    m = np.minimum(conf_i, conf_j)
    threshold = np.quantile(m[~sky], 0.5, method="lower")
    assert mask.any()
    assert not (mask & sky).any()
    assert np.all(m[mask] > threshold)
    assert np.array_equal(mask, (m > threshold) & ~sky)


def test_identical_points_give_identity(rng):
    """No motion, every pixel an inlier"""
    x = rng.normal(size=(500, 3)) * 5.0
    result = RegistrationService.estimate_robust_sim3(x, x, full_mask(500))
    assert result.transform.is_close(Sim3.identity(), tol=1e-9)
    assert result.inlier_ratio == 1.0


def test_noiseless_recovery_in_one_iteration():
    """Clean correspondences are solved by the initial closed form"""
    x, _ = contaminated(0, fraction=0.0)
    result = RegistrationService.estimate_robust_sim3(x, TRUTH.apply(x), full_mask(len(x)))
    assert result.transform.is_close(TRUTH, tol=1e-9)
    assert result.iterations == 1
    assert result.residual_evaluations == result.n_valid * (result.iterations + 1)


def test_robust_to_outliers():
    """30% uniform outliers over 50 seeds"""
    passed = 0
    for seed in range(50):
        x, y = contaminated(seed)
        result = RegistrationService.estimate_robust_sim3(x, y, full_mask(len(x)))
        history = np.array(result.cost_history)
        assert np.all(np.diff(history) <= 1e-12 * history[:-1])
        S = result.transform
        if (
            rotation_error_deg(S, TRUTH) < 0.1
            and abs(S.scale / TRUTH.scale - 1.0) < 1e-3
            and np.linalg.norm(S.translation - TRUTH.translation) < 1e-2
            and 0.65 <= result.inlier_ratio <= 0.75
        ):
            passed += 1
    assert passed >= 48


def test_swapped_inputs_give_inverse(rng):
    """Registering in the other direction returns the inverse"""
    x = rng.normal(size=(300, 3)) * 4.0
    y = TRUTH.apply(x)
    forward = RegistrationService.estimate_robust_sim3(x, y, full_mask(300)).transform
    backward = RegistrationService.estimate_robust_sim3(y, x, full_mask(300)).transform
    assert (forward @ backward).is_close(Sim3.identity(), tol=1e-6)


def test_scale_equivariance(rng):
    """Scaling both clouds scales the translation only"""
    x = rng.normal(size=(300, 3)) * 4.0
    y = TRUTH.apply(x)
    base = RegistrationService.estimate_robust_sim3(x, y, full_mask(300)).transform
    scaled = RegistrationService.estimate_robust_sim3(3.0 * x, 3.0 * y, full_mask(300)).transform
    np.testing.assert_allclose(scaled.rotation, base.rotation, atol=1e-9)
    assert scaled.scale == pytest.approx(base.scale, abs=1e-9)
    np.testing.assert_allclose(scaled.translation, 3.0 * base.translation, atol=1e-9)


def test_fixed_huber_threshold():
    """A fixed threshold is exact on clean data and must be given explicitly"""
    x, _ = contaminated(3, fraction=0.0)
    params = RegistrationParams(huber_delta_mode="fixed", huber_delta=0.5)
    result = RegistrationService.estimate_robust_sim3(x, TRUTH.apply(x), full_mask(len(x)), params)
    assert result.transform.is_close(TRUTH, tol=1e-9)
    with pytest.raises(ValidationError):
        RegistrationParams(huber_delta_mode="fixed")


def test_too_few_correspondences(rng):
    """A mask below the minimum count is refused"""
    x = rng.normal(size=(20, 3))
    mask = np.zeros(20, dtype=bool)
    mask[:5] = True
    with pytest.raises(InsufficientCorrespondencesError):
        RegistrationService.estimate_robust_sim3(x, x, ValidMask(mask))


def test_huber_helpers():
    """Quadratic inside the threshold, linear outside"""
    r = np.array([0.0, 0.5, 2.0])
    assert huber_cost(r, 1.0) == pytest.approx(0.125 + 1.5)
    np.testing.assert_allclose(huber_weights(r, 1.0), [1.0, 1.0, 0.5])


@pytest.mark.parametrize("ratio,accepted", [(0.9, True), (0.3, False), (0.5, True)])
def test_verify_constraint(ratio, accepted):
    """Accepted at or above the inlier threshold, transform untouched"""
    S = Sim3(1.5, np.eye(3), [1.0, 2.0, 3.0])
    edge = RegistrationService.verify_constraint(Sim3Edge(0, 1, S, ratio), 0.5)
    assert edge.accepted is accepted
    assert edge.transform is S


@pytest.fixture(scope="module")
def gauged_pair():
    world = SyntheticWorldService.generate_world(
        WorldConfig(trajectory=[StraightSegment(length=20.0, frames=20)], height=24, width=32, sky_band_rows=4, seed=2)
    )
    corruption = CorruptionConfig(gauge_scale_sigma=0.2, gauge_rot_max=0.2, gauge_trans_sigma=1.0)
    first = Submap(id=0, base=BaseSegment(tuple(range(0, 6)), SegmentKind.LINEAR), overlap_frames=(6, 7, 8))
    second = Submap(id=1, base=BaseSegment(tuple(range(6, 12)), SegmentKind.LINEAR))
    geometry_i = SyntheticWorldService.infer_submap_geometry(first, world, corruption, ContextRole.PRECEDING)
    geometry_j = SyntheticWorldService.infer_submap_geometry(second, world, corruption, ContextRole.SUCCEEDING)
    g_i = SyntheticWorldService.submap_gauge(world.seed, 0, corruption)
    g_j = SyntheticWorldService.submap_gauge(world.seed, 1, corruption)
    expected = g_i @ world.pose(0).inverse() @ world.pose(6) @ g_j.inverse()
    return geometry_i, geometry_j, expected


def test_register_pair_maps_later_submap_into_earlier(gauged_pair):
    """The odometry edge recovers the relative gauge between the two submaps"""
    geometry_i, geometry_j, expected = gauged_pair
    anchor = RegistrationService.select_overlap_anchor((6, 7, 8), 3)
    edge = RegistrationService.register_pair(geometry_i, geometry_j, anchor, RegistrationParams())
    assert (edge.from_submap, edge.to_submap) == (0, 1)
    assert edge.kind == EdgeKind.ODOMETRY
    assert edge.anchor_frames == (6, 7, 8)
    assert edge.transform.is_close(expected, tol=1e-8)
    assert edge.accepted and edge.inlier_ratio == 1.0


def test_register_pair_needs_shared_anchor(gauged_pair):
    """An anchor frame missing from one context is a data error"""
    geometry_i, geometry_j, _ = gauged_pair
    with pytest.raises(DataIntegrityError):
        RegistrationService.register_pair(
            geometry_i, geometry_j, RegistrationService.loop_anchor(2), RegistrationParams()
        )


def test_dense_overlap_anchor_spans_the_overlap():
    """Dense alignment anchors on every overlap frame instead of the central window"""
    overlap = [10, 11, 12, 13, 14]
    assert RegistrationService.overlap_anchor(overlap, RegistrationParams()).frames == (11, 12, 13)
    dense = RegistrationParams(alignment="dense_overlap")
    anchor = RegistrationService.overlap_anchor(overlap, dense)
    assert anchor.kind == AnchorKind.OVERLAP
    assert anchor.frames == tuple(overlap)
    with pytest.raises(MissingAnchorError):
        RegistrationService.overlap_anchor([], dense)


def test_dense_overlap_mask_keeps_low_confidence(rng):
    """Dense alignment drops only sky pixels"""
    conf_i = rng.uniform(size=(3, 4, 5))
    conf_j = rng.uniform(size=(3, 4, 5))
    sky = np.zeros((3, 4, 5), dtype=bool)
    sky[:, 0] = True
    dense = RegistrationService.valid_mask_for(conf_i, conf_j, sky, RegistrationParams(alignment="dense_overlap"))
    assert np.array_equal(dense.mask, ~sky)
    filtered = RegistrationService.valid_mask_for(conf_i, conf_j, sky, RegistrationParams())
    assert filtered.count < dense.count
    assert not (filtered.mask & ~dense.mask).any()


def test_register_pair_dense_overlap(gauged_pair):
    """Noiseless geometry gives the same edge under dense alignment"""
    geometry_i, geometry_j, expected = gauged_pair
    params = RegistrationParams(alignment="dense_overlap")
    anchor = RegistrationService.overlap_anchor((6, 7, 8), params)
    edge = RegistrationService.register_pair(geometry_i, geometry_j, anchor, params)
    assert edge.anchor_frames == (6, 7, 8)
    assert edge.transform.is_close(expected, tol=1e-8)
    assert edge.accepted


def test_alignment_mode_validation():
    """Only anchor and dense_overlap alignment exist"""
    with pytest.raises(ValidationError):
        RegistrationParams(alignment="framewise")
