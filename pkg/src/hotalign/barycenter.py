"""Pairwise FGW and the block-coordinate-descent FGW barycenter used for co-clustering."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .embedding import cross_cost_matrix
from .errors import ValidationError
from .ot import SolverConfig, proximal_solve


def _sq(C):
    return C.multiply(C) if sp.issparse(C) else np.asarray(C) ** 2


def pairwise_gw_L(C1, C2, S) -> np.ndarray:
    """``L(v,u) = C1^2(v,.) S1 + C2^2(u,.) S^T 1 - 2 C1(v,.) S C2(u,.)^T``."""
    S = np.asarray(S, dtype=float)
    if C1.shape != (S.shape[0],) * 2 or C2.shape != (S.shape[1],) * 2:
        raise ValidationError(f"intra costs {C1.shape}, {C2.shape} do not fit coupling {S.shape}")
    rows = np.asarray(_sq(C1) @ S.sum(axis=1))
    cols = np.asarray(_sq(C2) @ S.sum(axis=0))
    cross = np.asarray(C2 @ np.asarray(C1 @ S).T).T
    return rows[:, None] + cols[None, :] - 2.0 * cross


def fgw_value(cross_cost, C1, C2, S, alpha) -> float:
    val = (1 - alpha) * np.vdot(cross_cost, S)
    if alpha > 0:
        val += alpha * np.vdot(pairwise_gw_L(C1, C2, S), S)
    return float(val)


def fgw_solve_pair(cross_cost, A1, A2, mu1, mu2, config: SolverConfig = SolverConfig(), init=None):
    """Local FGW solution between two graphs; returns ``(coupling, value)``."""
    cross_cost = np.asarray(cross_cost, dtype=float)
    if cross_cost.shape != (len(mu1), len(mu2)):
        raise ValidationError(f"cross cost {cross_cost.shape} does not match measures ({len(mu1)}, {len(mu2)})")
    res = proximal_solve(cross_cost, (A1, A2), (mu1, mu2), config,
                         gw_fn=lambda S: pairwise_gw_L(A1, A2, S), init=init)
    return res.coupling, res.objective


def _weights(K, weights):
    if weights is None:
        return np.ones(K)
    w = np.asarray(weights, dtype=float)
    if w.shape != (K,):
        raise ValidationError("one weight per graph required")
    return w


def update_barycenter_structure(adjacencies, couplings, mu_b, weights=None) -> np.ndarray:
    """``A_b = (1 / mu_b mu_b^T) * sum_i w_i S_i^T A_i S_i``; unit weights unless given."""
    mu_b = np.asarray(mu_b, dtype=float)
    if (mu_b <= 0).any():
        raise ZeroDivisionError("barycenter measure has a zero entry")
    w = _weights(len(couplings), weights)
    acc = np.zeros((len(mu_b), len(mu_b)))
    for wi, A, S in zip(w, adjacencies, couplings):
        acc += wi * (S.T @ np.asarray(A @ S))
    return acc / np.outer(mu_b, mu_b)


def update_barycenter_features(features, couplings, mu_b, weights=None) -> np.ndarray:
    """``X_b = sum_i w_i diag(1/mu_b) S_i^T X_i``; unit weights unless given."""
    mu_b = np.asarray(mu_b, dtype=float)
    if (mu_b <= 0).any():
        raise ZeroDivisionError("barycenter measure has a zero entry")
    w = _weights(len(couplings), weights)
    acc = 0.0
    for wi, X, S in zip(w, features, couplings):
        acc = acc + wi * (S.T @ np.asarray(X, dtype=float))
    return acc / mu_b[:, None]


@dataclass
class BarycenterState:
    A_b: np.ndarray
    X_b: np.ndarray
    mu_b: np.ndarray
    couplings: list
    objective_trace: list = field(default_factory=list)

    @property
    def M(self):
        return len(self.mu_b)


def barycenter_objective(features, adjacencies, state: BarycenterState, alpha) -> float:
    """Sum of per-graph FGW values against the barycenter (squared feature distances)."""
    total = 0.0
    for X, A, S in zip(features, adjacencies, state.couplings):
        cost = cross_cost_matrix(X, state.X_b) ** 2
        total += fgw_value(cost, A, state.A_b, S, alpha)
    return total


def initial_barycenter(features, adjacencies, M, seed=0) -> BarycenterState:
    rng = np.random.default_rng(seed)
    X0 = np.asarray(features[0], dtype=float)
    if not 1 <= M <= min(len(f) for f in features):
        raise ValidationError(f"cluster count {M} must lie in [1, min n_i]")
    rows = np.sort(rng.choice(len(X0), size=M, replace=False))
    density = float(np.mean([A.sum() / (A.shape[0] ** 2) for A in adjacencies]))
    mu_b = np.full(M, 1.0 / M)
    couplings = [np.outer(np.full(len(f), 1.0 / len(f)), mu_b) for f in features]
    return BarycenterState(np.full((M, M), density), X0[rows].copy(), mu_b, couplings)


def barycenter_bcd(features: Sequence[np.ndarray], adjacencies, M: int,
                   config: SolverConfig = SolverConfig(), seed: int = 0, rounds: Optional[int] = None,
                   prox_steps: int = 1, monotone_slack: float = 1e-6) -> BarycenterState:
    """Block coordinate descent on the FGW barycenter.

    Each round takes ``prox_steps`` proximal steps on every coupling
    (warm-started from the previous round), then sets the barycenter
    structure and features to their closed-form minimizers. Graphs get
    weight ``1/K`` in those averages.
    """
    K = len(features)
    if len(adjacencies) != K:
        raise ValidationError("one adjacency per feature matrix required")
    state = initial_barycenter(features, adjacencies, M, seed)
    rounds = config.outer_iters if rounds is None else rounds
    step_cfg = replace(config, outer_iters=prox_steps, outer_tol=0.0)
    mus = [np.full(len(f), 1.0 / len(f)) for f in features]
    w = np.full(K, 1.0 / K)
    state.objective_trace.append(barycenter_objective(features, adjacencies, state, config.alpha))
    for _ in range(rounds):
        new = []
        for X, A, mu, S in zip(features, adjacencies, mus, state.couplings):
            cost = cross_cost_matrix(X, state.X_b) ** 2
            S_new, _ = fgw_solve_pair(cost, A, state.A_b, mu, state.mu_b, step_cfg, init=S)
            new.append(S_new)
        state.couplings = new
        state.A_b = update_barycenter_structure(adjacencies, new, state.mu_b, w)
        state.A_b = 0.5 * (state.A_b + state.A_b.T)
        state.X_b = update_barycenter_features(features, new, state.mu_b, w)
        state.objective_trace.append(barycenter_objective(features, adjacencies, state, config.alpha))
    return state


@dataclass
class ClusterAlignment:
    assignment: list
    n_clusters: int

    def members(self, j) -> list:
        return [np.flatnonzero(a == j) for a in self.assignment]

    @property
    def clusters(self) -> list:
        return [self.members(j) for j in range(self.n_clusters)]

    def sizes(self) -> np.ndarray:
        return np.array([[int((a == j).sum()) for a in self.assignment] for j in range(self.n_clusters)])


def assign_clusters(state_or_couplings) -> ClusterAlignment:
    """Send every node to its heaviest barycenter node, then repair clusters missing a graph.

    Ties go to the lowest cluster index. Nodes of a cluster that lacks
    members from some graph move to their best-scoring valid cluster;
    surviving clusters are renumbered in their original order. If no
    cluster is valid everything collapses into one cluster.
    """
    couplings = getattr(state_or_couplings, "couplings", state_or_couplings)
    couplings = [np.asarray(S) for S in couplings]
    M = couplings[0].shape[1]
    assign = [np.argmax(S, axis=1) for S in couplings]
    valid = [all((a == j).any() for a in assign) for j in range(M)]
    if not any(valid):
        return ClusterAlignment([np.zeros(len(a), dtype=np.int64) for a in assign], 1)
    keep = np.flatnonzero(valid)
    remap = np.full(M, -1)
    remap[keep] = np.arange(len(keep))
    out = []
    for S, a in zip(couplings, assign):
        a = a.copy()
        bad = ~np.asarray(valid)[a]
        if bad.any():
            a[bad] = keep[np.argmax(S[np.ix_(np.flatnonzero(bad), keep)], axis=1)]
        out.append(remap[a].astype(np.int64))
    return ClusterAlignment(out, len(keep))
