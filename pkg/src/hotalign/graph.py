"""Graphs, multi-network problems, file I/O and the noisy Erdos-Renyi generator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import FormatError, GenerationError, ValidationError

MEASURE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph with optional node attributes.

    ``edges`` holds each undirected edge once as ``(min(u, v), max(u, v))``;
    the adjacency matrix is symmetrized on access.
    """

    node_count: int
    edges: np.ndarray
    weights: np.ndarray = None
    attributes: Optional[np.ndarray] = None
    id: str = ""

    def __post_init__(self):
        n = int(self.node_count)
        if n < 1:
            raise ValidationError(f"graph {self.id!r}: node_count must be positive, got {n}")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            bad = edges[(edges < 0).any(axis=1) | (edges >= n).any(axis=1)][0]
            raise ValidationError(
                f"graph {self.id!r}: edge ({bad[0]}, {bad[1]}) has a node index outside [0, {n})"
            )
        edges = np.sort(edges, axis=1)
        if self.weights is None:
            weights = np.ones(len(edges))
        else:
            weights = np.asarray(self.weights, dtype=float).reshape(-1)
            if len(weights) != len(edges):
                raise ValidationError("weights must have one entry per edge")
        if (weights < 0).any():
            raise ValidationError(f"graph {self.id!r}: negative edge weight")
        keys = edges[:, 0] * n + edges[:, 1]
        uniq, counts = np.unique(keys, return_counts=True)
        if (counts > 1).any():
            k = uniq[counts > 1][0]
            raise ValidationError(f"graph {self.id!r}: duplicate edge ({k // n}, {k % n})")
        attrs = self.attributes
        if attrs is not None:
            attrs = np.asarray(attrs, dtype=float)
            if attrs.ndim == 1:
                attrs = attrs[:, None]
            if attrs.shape[0] != n:
                raise ValidationError(
                    f"graph {self.id!r}: attribute matrix has {attrs.shape[0]} rows, expected {n}"
                )
            attrs.setflags(write=False)
        edges.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "attributes", attrs)

    @property
    def n(self) -> int:
        return self.node_count

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        n = self.node_count
        u, v = self.edges[:, 0], self.edges[:, 1]
        off = u != v
        rows = np.concatenate([u, v[off]])
        cols = np.concatenate([v, u[off]])
        vals = np.concatenate([self.weights, self.weights[off]])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def dense_adjacency(self) -> np.ndarray:
        return self.adjacency.toarray()

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    def isolated_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.degrees <= 0)

    def check_no_isolated(self):
        iso = self.isolated_nodes()
        if len(iso):
            raise ValidationError(f"graph {self.id!r}: isolated node {iso[0]}")

    def permuted(self, perm: Sequence[int], id: Optional[str] = None) -> "Graph":
        """Relabel node ``v`` as ``perm[v]``."""
        perm = np.asarray(perm)
        attrs = None
        if self.attributes is not None:
            attrs = np.empty_like(self.attributes)
            attrs[perm] = self.attributes
        return Graph(self.node_count, perm[self.edges], self.weights, attrs,
                     self.id if id is None else id)


@dataclass(frozen=True, eq=False)
class MultiNetworkProblem:
    graphs: tuple
    anchors: np.ndarray
    ground_truth: Optional[np.ndarray] = None

    def __post_init__(self):
        graphs = tuple(self.graphs)
        if len(graphs) < 2:
            raise ValidationError(f"need at least 2 graphs, got {len(graphs)}")
        widths = {g.attributes.shape[1] for g in graphs if g.attributes is not None}
        if len(widths) > 1:
            raise ValidationError(f"attribute widths differ across graphs: {sorted(widths)}")
        anchors = _check_tuples(self.anchors, graphs, "anchor")
        for i in range(len(graphs)):
            col = anchors[:, i]
            if len(np.unique(col)) != len(col):
                raise ValidationError(f"anchor tuples reuse a node of graph {i}")
        truth = None
        if self.ground_truth is not None:
            truth = _check_tuples(self.ground_truth, graphs, "ground-truth")
        object.__setattr__(self, "graphs", graphs)
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "ground_truth", truth)

    @property
    def K(self) -> int:
        return len(self.graphs)

    @property
    def node_counts(self) -> tuple:
        return tuple(g.n for g in self.graphs)

    def with_anchors(self, anchors) -> "MultiNetworkProblem":
        return MultiNetworkProblem(self.graphs, anchors, self.ground_truth)


def _check_tuples(tuples, graphs, what) -> np.ndarray:
    K = len(graphs)
    arr = np.asarray(tuples, dtype=np.int64)
    if arr.size == 0:
        arr = arr.reshape(0, K)
    if arr.ndim != 2 or arr.shape[1] != K:
        raise ValidationError(f"{what} tuples must have exactly {K} entries each")
    for i, g in enumerate(graphs):
        col = arr[:, i]
        if len(col) and (col.min() < 0 or col.max() >= g.n):
            raise ValidationError(f"{what} tuple index out of range for graph {i} (n={g.n})")
    arr.setflags(write=False)
    return arr


def uniform_measure(g) -> np.ndarray:
    """Uniform probability vector over the nodes of ``g`` (a Graph or a node count)."""
    n = g if isinstance(g, (int, np.integer)) else g.n
    if n < 1:
        raise ValidationError("uniform measure needs at least one node")
    w = np.full(n, 1.0 / n)
    return w / w.sum()


def check_measure(w, tol=MEASURE_TOL) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or (w < 0).any() or abs(w.sum() - 1.0) > tol:
        raise ValidationError("weights are not a probability vector")
    return w


# ---------------------------------------------------------------- file I/O


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def load_graph(path, attr_path=None, id: Optional[str] = None) -> Graph:
    """Read ``n m`` followed by ``m`` lines of ``u v [w]``."""
    path = Path(path)
    header = None
    edges, weights = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = _strip(raw)
            if not line:
                continue
            parts = line.split()
            if header is None:
                if len(parts) != 2:
                    raise FormatError("expected header 'n m'", path, lineno)
                try:
                    header = (int(parts[0]), int(parts[1]))
                except ValueError:
                    raise FormatError("header values must be integers", path, lineno) from None
                continue
            if len(parts) not in (2, 3):
                raise FormatError("expected 'u v' or 'u v w'", path, lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise FormatError(f"cannot parse edge {line!r}", path, lineno) from None
            if not (0 <= u < header[0] and 0 <= v < header[0]):
                raise ValidationError(
                    f"{path}:{lineno}: node index out of range [0, {header[0]}) in edge ({u}, {v})"
                )
            edges.append((u, v))
            weights.append(w)
    if header is None:
        raise FormatError("empty graph file", path)
    n, m = header
    if len(edges) != m:
        raise FormatError(f"header declares {m} edges but file has {len(edges)}", path)
    attrs = load_attributes(attr_path) if attr_path is not None else None
    g = Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(weights),
              attrs, id if id is not None else path.stem)
    g.check_no_isolated()
    return g


def write_graph(g: Graph, path):
    unit = bool(np.all(g.weights == 1.0))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{g.n} {g.edge_count}\n")
        for (u, v), w in zip(g.edges, g.weights):
            if unit:
                fh.write(f"{u} {v}\n")
            else:
                fh.write(f"{u} {v} {w!r}\n")


def load_attributes(path) -> np.ndarray:
    try:
        arr = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except ValueError as exc:
        raise FormatError(str(exc), path) from None
    return arr


def write_attributes(attrs, path):
    np.savetxt(path, np.asarray(attrs), delimiter=",", fmt="%.17g")


def load_tuples(path) -> np.ndarray:
    """Anchor / ground-truth CSV: one row per tuple, one column per graph."""
    try:
        arr = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.int64)
    except ValueError as exc:
        raise FormatError(str(exc), path) from None
    return arr


def write_tuples(tuples, path):
    np.savetxt(path, np.asarray(tuples, dtype=np.int64), delimiter=",", fmt="%d")


# -------------------------------------------------------------- generator


def ceil_frac(frac: float, m: int) -> int:
    """``ceil(frac * m)`` with ``frac`` read as the decimal it prints as (0.1 -> 1/10)."""
    return math.ceil(Fraction(str(frac)) * m)


def _er_edges(n, p, rng):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return np.stack([iu[keep], ju[keep]], axis=1)


def _is_connected(n, edges):
    if n == 1:
        return True
    a = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    return connected_components(a, directed=False)[0] == 1


def _insert_edges(n, edges, count, rng):
    present = set(map(tuple, edges.tolist()))
    total = n * (n - 1) // 2
    if len(present) + count > total:
        raise GenerationError(f"cannot insert {count} edges into a graph with {len(present)} of {total}")
    added = []
    while len(added) < count:
        u, v = rng.integers(0, n, size=2)
        if u == v:
            continue
        e = (min(u, v), max(u, v))
        if e in present:
            continue
        present.add(e)
        added.append(e)
    if not added:
        return edges
    return np.concatenate([edges, np.array(added, dtype=np.int64)])


def _remove_edges(n, edges, count, rng, retries):
    if count == 0:
        return edges
    for _ in range(retries):
        deg = np.bincount(edges.ravel(), minlength=n)
        keep = np.ones(len(edges), dtype=bool)
        removed = 0
        for idx in rng.permutation(len(edges)):
            u, v = edges[idx]
            if deg[u] > 1 and deg[v] > 1:
                keep[idx] = False
                deg[u] -= 1
                deg[v] -= 1
                removed += 1
                if removed == count:
                    return edges[keep]
    raise GenerationError(f"could not remove {count} edges without isolating a node")


def generate_noisy_er(n: int, p: float, k: int = 3, insert_frac: float = 0.10,
                      remove_frac: float = 0.15, seed: int = 0, anchor_count: int = 0,
                      max_resample: int = 100, removal_retries: int = 20) -> MultiNetworkProblem:
    """Noisy permuted copies of one connected Erdos-Renyi graph.

    Each copy gets an independent uniform node permutation, then
    ``ceil(insert_frac * m)`` new edges, then ``ceil(remove_frac * m')`` edge
    removals (``m'`` counted after insertion) that never isolate a node.
    ``ground_truth[v] = (perm_1[v], ..., perm_k[v])`` for base node ``v``;
    the first ``anchor_count`` rows of a seeded shuffle become anchors.
    """
    if not 0 < p < 1:
        raise ValidationError(f"edge probability must lie in (0, 1), got {p}")
    if not (0 <= insert_frac < 1 and 0 <= remove_frac < 1):
        raise ValidationError("insert/remove fractions must lie in [0, 1)")
    if k < 2:
        raise ValidationError(f"need at least 2 copies, got {k}")
    if not 0 <= anchor_count <= n:
        raise ValidationError(f"anchor_count must lie in [0, {n}]")
    rng = np.random.default_rng(seed)
    for _ in range(max_resample):
        base = _er_edges(n, p, rng)
        if len(base) and _is_connected(n, base):
            break
    else:
        raise GenerationError(f"no connected ER({n}, {p}) sample after {max_resample} draws")
    m = len(base)
    n_insert = ceil_frac(insert_frac, m)
    n_remove = ceil_frac(remove_frac, m + n_insert)

    graphs, perms = [], []
    for c in range(k):
        perm = rng.permutation(n)
        edges = np.sort(perm[base], axis=1)
        edges = _insert_edges(n, edges, n_insert, rng)
        edges = _remove_edges(n, edges, n_remove, rng, removal_retries)
        graphs.append(Graph(n, edges, id=f"g{c + 1}"))
        perms.append(perm)
    truth = np.stack(perms, axis=1)
    order = rng.permutation(n)
    anchors = truth[order[:anchor_count]]
    return MultiNetworkProblem(tuple(graphs), anchors, truth)
