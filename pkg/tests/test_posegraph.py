"""
Tests for the Sim(3) pose graph: residuals, optimization and trajectory composition
Run with: pytest tests/
"""
import time

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from app.exceptions import DataIntegrityError, InvalidArgumentError
from app.models.geometry import ContextRole, SubmapGeometry
from app.models.registration import EdgeKind, Sim3Edge
from app.models.sim3 import Sim3
from app.models.submap import BaseSegment, SegmentKind, Submap
from app.schemas.posegraph import LMParams
from app.services.posegraph_service import PoseGraphService, _EdgeSet, _stack
from tests.helpers import random_sim3, small_sim3


def edge(i, j, S, kind=EdgeKind.ODOMETRY, eta=1.0, accepted=True):
    return Sim3Edge(from_submap=i, to_submap=j, transform=S, inlier_ratio=eta, kind=kind, accepted=accepted)


def relative(nodes, i, j):
    return nodes[i].inverse() @ nodes[j]


def yaw_step(degrees, forward=10.0):
    return Sim3(1.0, Rotation.from_euler("z", degrees, degrees=True).as_matrix(), [forward, 0.0, 0.0])


def chain_truth(n, step):
    nodes = {0: Sim3.identity()}
    for k in range(1, n):
        nodes[k] = nodes[k - 1] @ step
    return nodes


def test_edge_residual_examples(rng):
    """Zero on consistent poses, pure scale shows up in sigma with a negative sign"""
    I = Sim3.identity()
    np.testing.assert_allclose(PoseGraphService.edge_residual(I, I, I), np.zeros(7), atol=1e-15)
    S = random_sim3(rng)
    np.testing.assert_allclose(PoseGraphService.edge_residual(I, S, S), np.zeros(7), atol=1e-9)
    r = PoseGraphService.edge_residual(I, I, Sim3(np.e, np.eye(3), np.zeros(3)))
    np.testing.assert_allclose(r, [0, 0, 0, 0, 0, 0, -1.0], atol=1e-12)


def test_residual_norms_are_gauge_invariant(rng):
    """Left-multiplying every node leaves the residuals unchanged"""
    for _ in range(50):
        X_i, X_j = random_sim3(rng), random_sim3(rng)
        S = relative({0: X_i, 1: X_j}, 0, 1) @ small_sim3(rng, 0.5, 0.1, 1.0)
        G = random_sim3(rng)
        before = np.linalg.norm(PoseGraphService.edge_residual(X_i, X_j, S))
        after = np.linalg.norm(PoseGraphService.edge_residual(G @ X_i, G @ X_j, S))
        assert abs(before - after) < 1e-9


def test_jacobians_match_finite_differences(rng):
    """Batched Jacobians agree with per-edge central differences"""
    h = 1e-5
    for _ in range(100):
        X_i, X_j = random_sim3(rng, trans_sigma=2.0), random_sim3(rng, trans_sigma=2.0)
        S = relative({0: X_i, 1: X_j}, 0, 1) @ small_sim3(rng, 0.8, 0.2, 0.5)
        edge_set = _EdgeSet([edge(0, 1, S)], {0: 0, 1: 1})
        J_i, J_j = PoseGraphService.edge_jacobians(_stack({0: X_i, 1: X_j}, [0, 1]), edge_set)
        for which, J in ((0, J_i[0]), (1, J_j[0])):
            numeric = np.zeros((7, 7))
            for a in range(7):
                step = np.zeros(7)
                step[a] = h
                plus, minus = Sim3.exp(step), Sim3.exp(-step)
                if which == 0:
                    r_plus = PoseGraphService.edge_residual(plus @ X_i, X_j, S)
                    r_minus = PoseGraphService.edge_residual(minus @ X_i, X_j, S)
                else:
                    r_plus = PoseGraphService.edge_residual(X_i, plus @ X_j, S)
                    r_minus = PoseGraphService.edge_residual(X_i, minus @ X_j, S)
                numeric[:, a] = (r_plus - r_minus) / (2 * h)
            assert np.linalg.norm(J - numeric) <= 1e-4 * np.linalg.norm(numeric)


def test_two_node_graph(rng):
    """A single edge is satisfied exactly"""
    S = small_sim3(rng, 1.0, 0.3, 5.0)
    graph = PoseGraphService.build_graph([0, 1], [edge(0, 1, S)], initial={0: Sim3.identity(), 1: Sim3.identity()})
    optimized, report = PoseGraphService.optimize_graph(graph)
    assert optimized.nodes[1].is_close(S, tol=1e-8)
    assert optimized.nodes[0].is_close(Sim3.identity(), tol=0.0)
    assert report.final_cost < 1e-18
    assert report.final_cost <= report.initial_cost


def test_initialization_chains_odometry(rng):
    """Default initial values compose odometry from the gauge"""
    S01, S12 = small_sim3(rng, 0.5, 0.1, 3.0), small_sim3(rng, 0.5, 0.1, 3.0)
    graph = PoseGraphService.build_graph([0, 1, 2], [edge(1, 2, S12), edge(0, 1, S01)])
    assert graph.nodes[2].is_close(S01 @ S12, tol=1e-12)
    _, report = PoseGraphService.optimize_graph(graph)
    assert report.initial_cost < 1e-18


def test_consistent_cycle(rng):
    """A consistent three-node cycle reaches zero cost from perturbed values"""
    truth = {0: Sim3.identity(), 1: small_sim3(rng, 0.6, 0.2, 5.0), 2: small_sim3(rng, 0.6, 0.2, 5.0)}
    edges = [
        edge(0, 1, relative(truth, 0, 1)),
        edge(1, 2, relative(truth, 1, 2)),
        edge(0, 2, relative(truth, 0, 2), kind=EdgeKind.LOOP),
    ]
    initial = {k: v @ small_sim3(rng, 0.1, 0.02, 0.3) for k, v in truth.items()}
    graph = PoseGraphService.build_graph([0, 1, 2], edges, initial=initial)
    optimized, report = PoseGraphService.optimize_graph(graph)
    assert report.final_cost < 1e-18
    assert report.converged
    for k in truth:
        assert optimized.nodes[k].is_close(truth[k], tol=1e-7)
    assert len(report.residual_norms) == 3


def test_loop_edge_corrects_drift():
    """Noisy 20-node chain plus an exact loop edge"""
    successes = 0
    for seed in range(30):
        rng = np.random.default_rng(seed)
        step = yaw_step(6.0)
        truth = chain_truth(20, step)
        edges = []
        for k in range(19):
            noise = Sim3(
                float(np.exp(rng.normal() * 0.02)),
                Rotation.from_rotvec(np.radians(1.0) * rng.normal(size=3) / np.sqrt(3.0)).as_matrix(),
                np.zeros(3),
            )
            edges.append(edge(k, k + 1, step @ noise))
        edges.append(edge(0, 19, relative(truth, 0, 19), kind=EdgeKind.LOOP))
        graph = PoseGraphService.build_graph(range(20), edges)
        before = np.linalg.norm(graph.nodes[19].translation - truth[19].translation)
        optimized, report = PoseGraphService.optimize_graph(graph)
        after = np.linalg.norm(optimized.nodes[19].translation - truth[19].translation)
        assert report.final_cost <= report.initial_cost
        if after <= 0.1 * before:
            successes += 1
    assert successes >= 27


def test_robust_kernel_limits_a_bad_loop():
    """One corrupted loop edge among consistent constraints does less damage with Huber"""
    truth = chain_truth(10, yaw_step(10.0))
    edges = [edge(k, k + 1, relative(truth, k, k + 1)) for k in range(9)]
    edges.append(edge(0, 5, relative(truth, 0, 5), kind=EdgeKind.LOOP))
    edges.append(edge(3, 8, relative(truth, 3, 8), kind=EdgeKind.LOOP))
    bad = relative(truth, 0, 9) @ Sim3(1.3, Rotation.from_euler("z", 20, degrees=True).as_matrix(), [15.0, -10.0, 5.0])
    edges.append(edge(0, 9, bad, kind=EdgeKind.LOOP))

    def worst_error(params):
        graph = PoseGraphService.build_graph(range(10), edges)
        optimized, _ = PoseGraphService.optimize_graph(graph, params=params)
        return max(np.linalg.norm(optimized.nodes[k].translation - truth[k].translation) for k in truth)

    assert worst_error(LMParams(robust=True)) < worst_error(LMParams(robust=False))


def test_large_graph_solves_quickly():
    """500 nodes with ten loop edges"""
    rng = np.random.default_rng(99)
    step = yaw_step(0.3, forward=2.0)
    truth = chain_truth(500, step)
    edges = [edge(k, k + 1, step @ small_sim3(rng, np.radians(0.1), 0.005, 0.01)) for k in range(499)]
    for _ in range(10):
        i = int(rng.integers(0, 250))
        j = int(rng.integers(i + 100, 500))
        edges.append(edge(i, j, relative(truth, i, j), kind=EdgeKind.LOOP))
    graph = PoseGraphService.build_graph(range(500), edges)
    start = time.perf_counter()
    _, report = PoseGraphService.optimize_graph(graph)
    elapsed = time.perf_counter() - start
    assert report.final_cost <= report.initial_cost
    assert elapsed < 1.0


def test_build_graph_validation(rng):
    """Disconnected graphs, unknown nodes and self edges are refused"""
    S = small_sim3(rng, 0.3, 0.1, 1.0)
    with pytest.raises(InvalidArgumentError):
        PoseGraphService.build_graph([0, 1, 2], [edge(0, 1, S)])
    with pytest.raises(InvalidArgumentError):
        PoseGraphService.build_graph([0, 1], [edge(0, 5, S)])
    with pytest.raises(InvalidArgumentError):
        PoseGraphService.build_graph([0, 1], [edge(0, 1, S), edge(1, 1, S)])
    with pytest.raises(InvalidArgumentError):
        PoseGraphService.build_graph([1, 2], [edge(1, 2, S)], gauge=0)
    with pytest.raises(InvalidArgumentError):
        PoseGraphService.build_graph([0, 1], [edge(0, 1, S, eta=0.2, accepted=False)])


def test_rejected_edges_are_dropped(rng):
    """Only accepted edges enter the graph"""
    S = small_sim3(rng, 0.3, 0.1, 1.0)
    graph = PoseGraphService.build_graph(
        [0, 1], [edge(0, 1, S), edge(0, 1, S.inverse(), kind=EdgeKind.LOOP, eta=0.1, accepted=False)]
    )
    assert len(graph.edges) == 1


def test_single_node_graph():
    """A lone submap needs no optimization"""
    graph = PoseGraphService.build_graph([0], [])
    optimized, report = PoseGraphService.optimize_graph(graph)
    assert report.termination == "no_edges"
    assert optimized.nodes[0].is_close(Sim3.identity(), tol=0.0)


def local_geometry(submap, poses):
    F = len(submap.frames)
    return SubmapGeometry(
        submap_id=submap.id,
        role=ContextRole.PRECEDING,
        frames=submap.frames,
        points=np.zeros((F, 1, 1, 3)),
        confidences=np.ones((F, 1, 1)),
        sky=np.zeros((F, 1, 1), dtype=bool),
        poses=tuple(poses),
    )


@pytest.fixture
def two_submaps(rng):
    first = Submap(id=0, base=BaseSegment((0, 1, 2), SegmentKind.LINEAR), overlap_frames=(3,))
    second = Submap(id=1, base=BaseSegment((3, 4), SegmentKind.LINEAR))
    local_first = [Sim3.identity()] + [small_sim3(rng, 0.2, 0.0, 2.0) for _ in range(3)]
    local_second = [Sim3.identity(), small_sim3(rng, 0.2, 0.0, 2.0)]
    return [(first, local_geometry(first, local_first)), (second, local_geometry(second, local_second))]


def test_compose_with_identity_nodes(two_submaps):
    """Identity nodes concatenate the local trajectories of the base keyframes"""
    graph = PoseGraphService.build_graph([0], [])
    graph.nodes[1] = Sim3.identity()
    trajectory = PoseGraphService.compose_global_trajectory(graph, two_submaps, np.arange(5) * 0.1)
    assert len(trajectory) == 5
    np.testing.assert_allclose(trajectory.timestamps, np.arange(5) * 0.1)
    (_, geo_first), (_, geo_second) = two_submaps
    np.testing.assert_allclose(trajectory.positions[2], geo_first.local_pose(2).translation)
    np.testing.assert_allclose(trajectory.positions[3], geo_second.local_pose(3).translation)


def test_compose_with_translated_node(two_submaps):
    """A translated node shifts every frame of its submap"""
    shift = Sim3(1.0, np.eye(3), [10.0, 0.0, 0.0])
    graph = PoseGraphService.build_graph([0], [])
    graph.nodes[1] = shift
    trajectory = PoseGraphService.compose_global_trajectory(graph, two_submaps, np.arange(5))
    geo_second = two_submaps[1][1]
    for frame in (3, 4):
        np.testing.assert_allclose(
            trajectory.positions[frame], geo_second.local_pose(frame).translation + [10.0, 0.0, 0.0], atol=1e-12
        )


def test_compose_requires_every_pose(two_submaps):
    """Missing nodes or timestamps are data errors"""
    graph = PoseGraphService.build_graph([0], [])
    with pytest.raises(DataIntegrityError):
        PoseGraphService.compose_global_trajectory(graph, two_submaps, np.arange(5))
    graph.nodes[1] = Sim3.identity()
    with pytest.raises(DataIntegrityError):
        PoseGraphService.compose_global_trajectory(graph, two_submaps, np.arange(3))
