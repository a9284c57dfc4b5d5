"""Anchor-relative random-walk-with-restart embeddings and the costs built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist

from .errors import CapacityError, ConfigurationError, NumericalError, ValidationError
from .graph import Graph, MultiNetworkProblem

RWR_TOL = 1e-8


def transition_matrix(g: Graph) -> sp.csr_matrix:
    """Column-stochastic ``(D^-1 A)^T``."""
    g.check_no_isolated()
    inv_deg = 1.0 / g.degrees
    return sp.csr_matrix(sp.diags(inv_deg) @ g.adjacency).T.tocsr()


def rwr_iteration_cap(beta: float) -> int:
    if beta >= 1.0:
        return 1
    return 10 * math.ceil(math.log(RWR_TOL) / math.log(1.0 - beta))


def rwr_matrix(g: Graph, anchors: Sequence[int], beta: float = 0.15, tol: float = RWR_TOL) -> np.ndarray:
    """RWR vectors for several restart nodes at once, one column per anchor.

    Fixed-point iteration ``r <- (1 - beta) W r + beta e`` started from
    ``e``; stops once the L1 change of every column is at most ``tol``.
    """
    if not 0 < beta <= 1:
        raise ValidationError(f"restart probability must lie in (0, 1], got {beta}")
    anchors = np.asarray(anchors, dtype=np.int64).reshape(-1)
    if len(anchors) and (anchors.min() < 0 or anchors.max() >= g.n):
        raise ValidationError(f"anchor node out of range for graph {g.id!r}")
    W = transition_matrix(g)
    E = np.zeros((g.n, len(anchors)))
    E[anchors, np.arange(len(anchors))] = 1.0
    if beta == 1.0:
        return E
    R = E.copy()
    restart = beta * E
    for _ in range(rwr_iteration_cap(beta)):
        nxt = (1.0 - beta) * (W @ R) + restart
        resid = np.abs(nxt - R).sum(axis=0)
        R = nxt
        if resid.size == 0 or resid.max() <= tol:
            return R
    raise NumericalError(f"RWR did not converge on graph {g.id!r}", iteration=rwr_iteration_cap(beta))


def rwr_scores(g: Graph, anchor_node: int, beta: float = 0.15) -> np.ndarray:
    return rwr_matrix(g, [anchor_node], beta)[:, 0]


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    Z: tuple
    R: tuple
    with_attributes: bool

    @property
    def K(self):
        return len(self.Z)

    @property
    def width(self):
        return self.Z[0].shape[1]


def build_embeddings(problem: MultiNetworkProblem, beta: float = 0.15,
                     use_attributes: bool = False) -> EmbeddingSet:
    """``Z_i = [X_i || R_i]`` with ``attributes``, else ``Z_i = R_i``.

    Column ``p`` of every ``R_i`` is the RWR vector restarted at anchor
    tuple ``p``'s node in graph ``i``, which is what puts all graphs in one
    shared coordinate system.
    """
    if len(problem.anchors) == 0:
        raise ValidationError("at least one anchor tuple is required")
    if use_attributes and any(g.attributes is None for g in problem.graphs):
        raise ConfigurationError("attributes requested but some graph has none")
    Rs, Zs = [], []
    for i, g in enumerate(problem.graphs):
        R = rwr_matrix(g, problem.anchors[:, i], beta)
        R.setflags(write=False)
        Z = np.hstack([g.attributes, R]) if use_attributes else R
        Z.setflags(write=False)
        Rs.append(R)
        Zs.append(Z)
    return EmbeddingSet(tuple(Zs), tuple(Rs), use_attributes)


def cross_cost_matrix(features_a, features_b) -> np.ndarray:
    a = np.atleast_2d(np.asarray(features_a, dtype=float))
    b = np.atleast_2d(np.asarray(features_b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValidationError(f"feature widths differ: {a.shape[1]} vs {b.shape[1]}")
    return cdist(a, b)


def tensor_elements(shape) -> int:
    return int(np.prod([int(s) for s in shape], dtype=object))


def pair_cost_matrices(features: Sequence[np.ndarray]) -> dict:
    """Euclidean distance matrix for every graph pair ``j < k``."""
    K = len(features)
    return {(j, k): cross_cost_matrix(features[j], features[k])
            for j in range(K) for k in range(j + 1, K)}


def sum_pair_costs(pair_costs: dict, shape) -> np.ndarray:
    K = len(shape)
    out = np.zeros(shape)
    for (j, k), D in pair_costs.items():
        idx = [1] * K
        idx[j], idx[k] = shape[j], shape[k]
        out += D.reshape(idx)
    return out


def cost_tensor(embeddings, node_lists=None, budget=None) -> np.ndarray:
    """``C(v_1..v_K) = sum_{j<k} ||Z_j(v_j) - Z_k(v_k)||_2`` over the given nodes.

    ``embeddings`` is an EmbeddingSet or a plain sequence of per-graph
    feature matrices. ``node_lists`` restricts graph ``i`` to those rows.
    """
    Z = embeddings.Z if isinstance(embeddings, EmbeddingSet) else tuple(embeddings)
    if node_lists is None:
        node_lists = [np.arange(z.shape[0]) for z in Z]
    if len(node_lists) != len(Z):
        raise ValidationError("need one node list per graph")
    rows = []
    for z, nodes in zip(Z, node_lists):
        nodes = np.asarray(nodes, dtype=np.int64)
        if len(nodes) == 0:
            raise ValidationError("empty node list")
        if nodes.min() < 0 or nodes.max() >= z.shape[0]:
            raise ValidationError("node index out of range in cost tensor request")
        rows.append(z[nodes])
    shape = tuple(len(r) for r in rows)
    if budget is not None and tensor_elements(shape) > budget:
        raise CapacityError(f"cost tensor of shape {shape} exceeds the element budget {budget:g}",
                            elements=tensor_elements(shape), budget=budget)
    return sum_pair_costs(pair_cost_matrices(rows), shape)
