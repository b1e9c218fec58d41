import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components
from scipy.sparse.linalg import spsolve

from app.exceptions import DataIntegrityError, DomainError, InvalidArgumentError, NumericalFailureError
from app.models.geometry import SubmapGeometry
from app.models.posegraph import PoseGraph
from app.models.registration import EdgeKind, Sim3Edge
from app.models.sim3 import Sim3
from app.models.submap import Submap
from app.models.trajectory import Trajectory
from app.schemas.posegraph import LMParams, OptimizeReport
from app.utils import lie

logger = logging.getLogger(__name__)

DOF = 7
HUBER_TUNING = 1.345
MAD_TO_SIGMA = 1.4826


class _EdgeSet:
    """Edge list flattened into arrays for batched evaluation"""

    def __init__(self, edges: Sequence[Sim3Edge], index: Dict[int, int]):
        self.i = np.array([index[e.from_submap] for e in edges], dtype=int)
        self.j = np.array([index[e.to_submap] for e in edges], dtype=int)
        self.weights = np.array([e.weight for e in edges], dtype=float)
        inverses = [e.transform.inverse() for e in edges]
        self.meas_inv = (
            np.array([m.scale for m in inverses]),
            np.stack([m.rotation for m in inverses]),
            np.stack([m.translation for m in inverses]),
        )

    def __len__(self) -> int:
        return int(self.i.size)


def _stack(nodes: Dict[int, Sim3], ids: Sequence[int]) -> lie.Sim3Arrays:
    return (
        np.array([nodes[k].scale for k in ids]),
        np.stack([nodes[k].rotation for k in ids]),
        np.stack([nodes[k].translation for k in ids]),
    )


def _take(state: lie.Sim3Arrays, idx: np.ndarray) -> lie.Sim3Arrays:
    return state[0][idx], state[1][idx], state[2][idx]


def _relative_residuals(x_i: lie.Sim3Arrays, x_j: lie.Sim3Arrays, meas_inv: lie.Sim3Arrays) -> np.ndarray:
    """log(S^-1 X_i^-1 X_j), broadcast over leading dimensions"""
    rel = lie.sim3_compose(lie.sim3_inverse(x_i), x_j)
    return lie.sim3_log(*lie.sim3_compose(meas_inv, rel))


def _perturbations(h: float) -> lie.Sim3Arrays:
    """exp(+h e_a) for a = 0..6 followed by exp(-h e_a), shaped (14, 1, ...)"""
    basis = np.vstack([np.eye(DOF) * h, -np.eye(DOF) * h])
    s, R, t = lie.sim3_exp(basis)
    return s[:, None], R[:, None], t[:, None]


class PoseGraphService:
    """Graph construction, robust Levenberg-Marquardt on Sim(3) and trajectory composition"""

    @staticmethod
    def edge_residual(X_i: Sim3, X_j: Sim3, S_hat: Sim3) -> np.ndarray:
        """7-vector log(S_hat^-1 X_i^-1 X_j); zero iff X_i^-1 X_j equals S_hat"""
        return (S_hat.inverse() @ X_i.inverse() @ X_j).log()

    @staticmethod
    def initialize_nodes(
        node_ids: Sequence[int], edges: Sequence[Sim3Edge], gauge: int = 0
    ) -> Dict[int, Sim3]:
        """
        Chain-compose edges from the gauge node, odometry edges first. Nodes
        only reachable through loop edges are initialized through them.
        """
        ids = sorted(node_ids)
        index = {k: n for n, k in enumerate(ids)}
        nodes: Dict[int, Sim3] = {gauge: Sim3.identity()}

        def tree_from(candidates: List[Sim3Edge]):
            by_pair: Dict[Tuple[int, int], Sim3Edge] = {}
            for edge in candidates:
                key = (min(edge.from_submap, edge.to_submap), max(edge.from_submap, edge.to_submap))
                best = by_pair.get(key)
                if best is None or (edge.kind == EdgeKind.ODOMETRY, edge.weight) > (
                    best.kind == EdgeKind.ODOMETRY,
                    best.weight,
                ):
                    by_pair[key] = edge
            rows = [index[a] for a, _ in by_pair]
            cols = [index[b] for _, b in by_pair]
            adjacency = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(ids), len(ids))).tocsr()
            order, predecessors = breadth_first_order(
                adjacency, index[gauge], directed=False, return_predecessors=True
            )
            for n in order[1:]:
                node, parent = ids[n], ids[predecessors[n]]
                if node in nodes:
                    continue
                edge = by_pair[(min(node, parent), max(node, parent))]
                if edge.from_submap == parent:
                    nodes[node] = nodes[parent] @ edge.transform
                else:
                    nodes[node] = nodes[parent] @ edge.transform.inverse()

        tree_from([e for e in edges if e.kind == EdgeKind.ODOMETRY])
        if len(nodes) < len(ids):
            tree_from(list(edges))
        missing = [k for k in ids if k not in nodes]
        if missing:
            raise InvalidArgumentError(f"nodes {missing} are not connected to gauge node {gauge}")
        return nodes

    @staticmethod
    def build_graph(
        node_ids: Sequence[int],
        edges: Sequence[Sim3Edge],
        gauge: int = 0,
        initial: Optional[Dict[int, Sim3]] = None,
    ) -> PoseGraph:
        """Keep accepted edges, check connectivity through the gauge, initialize unless `initial` is given"""
        ids = sorted(set(int(k) for k in node_ids))
        if gauge not in ids:
            raise InvalidArgumentError(f"gauge node {gauge} is not a graph node")
        known = set(ids)
        accepted = [e for e in edges if e.accepted]
        for edge in accepted:
            if edge.from_submap not in known or edge.to_submap not in known:
                raise InvalidArgumentError(f"edge {edge.from_submap}->{edge.to_submap} references a missing node")
            if edge.from_submap == edge.to_submap:
                raise InvalidArgumentError(f"self edge on node {edge.from_submap}")
        if len(ids) > 1:
            index = {k: n for n, k in enumerate(ids)}
            rows = [index[e.from_submap] for e in accepted]
            cols = [index[e.to_submap] for e in accepted]
            adjacency = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(ids), len(ids)))
            n_components, _ = connected_components(adjacency, directed=False)
            if n_components > 1:
                raise InvalidArgumentError(f"pose graph splits into {n_components} components")
        if initial is None:
            nodes = PoseGraphService.initialize_nodes(ids, accepted, gauge)
        else:
            if set(initial) != known:
                raise InvalidArgumentError("initial values must cover exactly the graph nodes")
            nodes = dict(initial)
            nodes[gauge] = Sim3.identity()
        return PoseGraph(nodes=nodes, edges=accepted, gauge=gauge)

    @staticmethod
    def edge_jacobians(
        state: lie.Sim3Arrays, edge_set: _EdgeSet, h: float = 1e-6
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Central-difference Jacobians of every edge residual with respect to
        left increments of its two nodes, shapes (E, 7, 7).

        (exp(d) X_i)^-1 X_j equals X_i^-1 exp(-d) X_j, so J_i = -J_j and only
        the perturbations of X_j are evaluated.
        """
        x_j = _take(state, edge_set.j)
        left = lie.sim3_compose(edge_set.meas_inv, lie.sim3_inverse(_take(state, edge_set.i)))
        perturbed = lie.sim3_compose(lie.sim3_compose(left, _perturbations(h)), x_j)
        r = lie.sim3_log(*perturbed)
        # (14, E, 7) -> (E, 7 residual rows, 7 tangent columns)
        J_j = np.transpose(r[:DOF] - r[DOF:], (1, 2, 0)) / (2.0 * h)
        return -J_j, J_j

    @staticmethod
    def _normal_equations(
        J_i: np.ndarray,
        J_j: np.ndarray,
        residuals: np.ndarray,
        weights: np.ndarray,
        edge_set: _EdgeSet,
        block: np.ndarray,
        n_free: int,
    ) -> Tuple[sp.csr_matrix, np.ndarray]:
        size = n_free * DOF
        rows, cols, data = [], [], []
        g = np.zeros(size)
        offsets = np.arange(DOF)
        blocks_i, blocks_j = block[edge_set.i], block[edge_set.j]
        for a_blk, Ja in ((blocks_i, J_i), (blocks_j, J_j)):
            live = a_blk >= 0
            grad = np.einsum("eki,ek->ei", Ja[live], weights[live, None] * residuals[live])
            np.add.at(g, (a_blk[live, None] * DOF + offsets).ravel(), grad.ravel())
            for b_blk, Jb in ((blocks_i, J_i), (blocks_j, J_j)):
                both = live & (b_blk >= 0)
                if not both.any():
                    continue
                H_ab = weights[both, None, None] * np.einsum("eki,ekj->eij", Ja[both], Jb[both])
                r_idx = a_blk[both, None, None] * DOF + offsets[None, :, None]
                c_idx = b_blk[both, None, None] * DOF + offsets[None, None, :]
                rows.append(np.broadcast_to(r_idx, H_ab.shape).ravel())
                cols.append(np.broadcast_to(c_idx, H_ab.shape).ravel())
                data.append(H_ab.ravel())
        if data:
            H = sp.coo_matrix(
                (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
            ).tocsr()
        else:
            H = sp.csr_matrix((size, size))
        return H, g

    @staticmethod
    def _levenberg_marquardt(
        state: lie.Sim3Arrays,
        edge_set: _EdgeSet,
        free: np.ndarray,
        block: np.ndarray,
        edge_cost: Callable[[np.ndarray], np.ndarray],
        edge_weights: Callable[[np.ndarray], np.ndarray],
        params: LMParams,
        max_iters: int,
    ) -> Tuple[lie.Sim3Arrays, float, int, str]:
        """Minimizes sum(edge_cost(squared weighted norms)); edge_weights gives the IRLS factor per edge"""

        def squared_norms(s: lie.Sim3Arrays) -> Tuple[np.ndarray, np.ndarray]:
            r = _relative_residuals(_take(s, edge_set.i), _take(s, edge_set.j), edge_set.meas_inv)
            return r, edge_set.weights * np.sum(r * r, axis=1)

        residuals, e = squared_norms(state)
        cost = float(np.sum(edge_cost(e)))
        lam = params.lambda_init
        n_free = int(free.size)
        if n_free == 0 or max_iters == 0:
            return state, cost, 0, "no_free_nodes" if n_free == 0 else "max_iters"

        for iteration in range(1, max_iters + 1):
            if cost < 1e-30:
                return state, cost, iteration - 1, "zero_cost"
            J_i, J_j = PoseGraphService.edge_jacobians(state, edge_set, params.jacobian_step)
            weights = edge_set.weights * edge_weights(e)
            H, g = PoseGraphService._normal_equations(J_i, J_j, residuals, weights, edge_set, block, n_free)
            diagonal = H.diagonal()
            while True:
                damped = H + sp.diags(lam * diagonal + 1e-12 * (1.0 + diagonal), format="csr")
                delta = spsolve(damped.tocsc(), -g)
                if not np.all(np.isfinite(delta)):
                    raise NumericalFailureError(
                        "non-finite Levenberg-Marquardt step",
                        diagnostics={"iteration": iteration, "lambda": lam, "cost": cost},
                    )
                if np.linalg.norm(delta) < params.step_tol:
                    return state, cost, iteration, "small_step"
                step = lie.sim3_exp(delta.reshape(n_free, DOF))
                moved = lie.sim3_compose(step, _take(state, free))
                candidate = tuple(np.array(a, copy=True) for a in state)
                for arr, new in zip(candidate, moved):
                    arr[free] = new
                try:
                    cand_residuals, cand_e = squared_norms(candidate)
                    cand_cost = float(np.sum(edge_cost(cand_e)))
                except DomainError:
                    cand_cost = np.inf
                if np.isfinite(cand_cost) and cand_cost <= cost:
                    break
                lam *= 10.0
                if lam > params.lambda_max:
                    return state, cost, iteration, "lambda_max"
            change = (cost - cand_cost) / max(cost, np.finfo(float).tiny)
            state, residuals, e, cost = candidate, cand_residuals, cand_e, cand_cost
            lam = max(lam / 10.0, 1e-15)
            logger.debug("lm iter=%d cost=%.6e lambda=%.1e", iteration, cost, lam)
            if change < params.rel_tol:
                return state, cost, iteration, "relative_change"
        return state, cost, max_iters, "max_iters"

    @staticmethod
    def huber_threshold(squared_norms: np.ndarray, params: LMParams) -> float:
        """MAD-scaled threshold on sqrt(w r^T r), never below the configured floor"""
        if params.huber_threshold is not None:
            return float(params.huber_threshold)
        if squared_norms.size == 0:
            return float(params.huber_floor)
        scale = MAD_TO_SIGMA * float(np.median(np.sqrt(squared_norms)))
        return max(params.huber_floor, HUBER_TUNING * scale)

    @staticmethod
    def optimize_graph(
        graph: PoseGraph,
        huber_threshold: Optional[float] = None,
        params: Optional[LMParams] = None,
    ) -> Tuple[PoseGraph, OptimizeReport]:
        """
        Weighted least squares from the initial values, then (when robust)
        Levenberg-Marquardt on the Huber cost with per-iteration reweighting.
        The gauge node stays at identity.
        """
        params = params or LMParams()
        if huber_threshold is not None:
            params = params.model_copy(update={"huber_threshold": huber_threshold})
        ids = graph.node_ids
        index = {k: n for n, k in enumerate(ids)}
        for edge in graph.edges:
            if edge.from_submap not in index or edge.to_submap not in index:
                raise InvalidArgumentError(f"edge {edge.from_submap}->{edge.to_submap} references a missing node")
        nodes = dict(graph.nodes)
        nodes[graph.gauge] = Sim3.identity()
        if not graph.edges:
            if len(ids) > 1:
                raise InvalidArgumentError("pose graph has several nodes and no edges")
            report = OptimizeReport(initial_cost=0.0, final_cost=0.0, iterations=0, converged=True, termination="no_edges")
            return graph.with_nodes(nodes), report

        edge_set = _EdgeSet(graph.edges, index)
        free = np.array([index[k] for k in graph.free_ids], dtype=int)
        block = -np.ones(len(ids), dtype=int)
        block[free] = np.arange(free.size)
        state = _stack(nodes, ids)

        initial_residuals = _relative_residuals(
            _take(state, edge_set.i), _take(state, edge_set.j), edge_set.meas_inv
        )
        initial_cost = float(np.sum(edge_set.weights * np.sum(initial_residuals**2, axis=1)))
        if not np.isfinite(initial_cost):
            raise NumericalFailureError(
                "initial pose graph cost is not finite", diagnostics={"edges": len(edge_set)}
            )

        def identity_cost(e: np.ndarray) -> np.ndarray:
            return e

        def unit_weights(e: np.ndarray) -> np.ndarray:
            return np.ones_like(e)

        state, cost, iterations, termination = PoseGraphService._levenberg_marquardt(
            state, edge_set, free, block, identity_cost, unit_weights, params, params.max_iters
        )
        logger.info("pose graph least squares: cost %.6e -> %.6e in %d iterations (%s)", initial_cost, cost, iterations, termination)

        threshold: Optional[float] = None
        if params.robust:
            r = _relative_residuals(_take(state, edge_set.i), _take(state, edge_set.j), edge_set.meas_inv)
            e = edge_set.weights * np.sum(r * r, axis=1)
            threshold = PoseGraphService.huber_threshold(e, params)
            k2 = threshold * threshold

            def huber(e: np.ndarray) -> np.ndarray:
                return np.where(e <= k2, e, 2.0 * threshold * np.sqrt(e) - k2)

            def huber_weights(e: np.ndarray) -> np.ndarray:
                return np.where(e <= k2, 1.0, threshold / np.sqrt(np.maximum(e, k2)))

            remaining = max(params.max_iters - iterations, 0)
            state, cost, robust_iterations, termination = PoseGraphService._levenberg_marquardt(
                state, edge_set, free, block, huber, huber_weights, params, remaining
            )
            iterations += robust_iterations
            logger.info("pose graph huber k=%.3e: cost %.6e after %d iterations (%s)", threshold, cost, iterations, termination)

        if not np.isfinite(cost):
            raise NumericalFailureError("pose graph cost became non-finite", diagnostics={"iterations": iterations})
        final_residuals = _relative_residuals(_take(state, edge_set.i), _take(state, edge_set.j), edge_set.meas_inv)
        optimized = {k: Sim3(state[0][n], state[1][n], state[2][n]) for n, k in enumerate(ids)}
        optimized[graph.gauge] = Sim3.identity()
        report = OptimizeReport(
            initial_cost=initial_cost,
            final_cost=cost,
            iterations=iterations,
            converged=termination != "max_iters",
            termination=termination,
            huber_threshold=threshold,
            residual_norms=np.linalg.norm(final_residuals, axis=1).tolist(),
        )
        return graph.with_nodes(optimized), report

    @staticmethod
    def compose_global_trajectory(
        graph: PoseGraph,
        submaps: Sequence[Tuple[Submap, SubmapGeometry]],
        timestamps: Sequence[float],
    ) -> Trajectory:
        """One world pose X_k T_k(n) per base keyframe, ordered by frame index"""
        timestamps = np.asarray(timestamps, dtype=float)
        poses: Dict[int, Sim3] = {}
        for submap, geometry in submaps:
            if submap.id not in graph.nodes:
                raise DataIntegrityError(f"submap {submap.id} has no optimized pose")
            X = graph.nodes[submap.id]
            for frame in submap.base.keyframes:
                if frame in poses:
                    raise DataIntegrityError(f"keyframe {frame} is owned by more than one submap")
                poses[frame] = X @ geometry.local_pose(frame)
        frames = sorted(poses)
        if frames and frames[-1] >= timestamps.size:
            raise DataIntegrityError(f"keyframe {frames[-1]} has no timestamp")
        return Trajectory.from_poses(timestamps[frames], [poses[f] for f in frames])
