"""End-to-end hierarchical alignment: embeddings, co-clustering, per-cluster MFGW, block assembly."""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .barycenter import ClusterAlignment, assign_clusters, barycenter_bcd
from .config import RunConfig
from .embedding import build_embeddings, tensor_elements
from .errors import CapacityError, ConfigurationError, FormatError, HotError, StageError, ValidationError
from .graph import MultiNetworkProblem
from .mfgw import MfgwProblem, solve_node_alignment


@dataclass
class AlignmentBlock:
    cluster: int
    members: tuple
    coupling: np.ndarray
    objective_trace: list = field(default_factory=list)

    @property
    def shape(self):
        return tuple(len(m) for m in self.members)


class AlignmentResult:
    """Block-diagonal K-way alignment: one dense coupling per cluster, zero across clusters."""

    def __init__(self, blocks: Sequence[AlignmentBlock], node_counts, config: Optional[dict] = None,
                 timings: Optional[dict] = None, extra: Optional[dict] = None):
        self.blocks = list(blocks)
        self.node_counts = tuple(int(n) for n in node_counts)
        self.config = dict(config or {})
        self.timings = dict(timings or {})
        self.extra = dict(extra or {})
        K = len(self.node_counts)
        self.cluster_of = [np.full(n, -1, dtype=np.int64) for n in self.node_counts]
        self.local_index = [np.full(n, -1, dtype=np.int64) for n in self.node_counts]
        for b, block in enumerate(self.blocks):
            if len(block.members) != K:
                raise ValidationError("block member lists must cover every graph")
            for i, mem in enumerate(block.members):
                if (self.cluster_of[i][mem] >= 0).any():
                    raise ValidationError(f"node of graph {i} appears in two blocks")
                self.cluster_of[i][mem] = b
                self.local_index[i][mem] = np.arange(len(mem))

    @property
    def K(self) -> int:
        return len(self.node_counts)

    @property
    def M(self) -> int:
        return len(self.blocks)

    @property
    def allocated_elements(self) -> int:
        return sum(tensor_elements(b.shape) for b in self.blocks)

    @property
    def flat_elements(self) -> int:
        return tensor_elements(self.node_counts)

    def _check_tuple(self, nodes):
        nodes = tuple(int(v) for v in nodes)
        if len(nodes) != self.K:
            raise ValidationError(f"expected a {self.K}-tuple, got {len(nodes)} entries")
        for i, (v, n) in enumerate(zip(nodes, self.node_counts)):
            if not 0 <= v < n:
                raise ValidationError(f"node {v} out of range for graph {i} (n={n})")
        return nodes

    def lookup_score(self, nodes) -> float:
        nodes = self._check_tuple(nodes)
        clusters = {int(self.cluster_of[i][v]) for i, v in enumerate(nodes)}
        if len(clusters) != 1 or -1 in clusters:
            return 0.0
        block = self.blocks[clusters.pop()]
        local = tuple(int(self.local_index[i][v]) for i, v in enumerate(nodes))
        return float(block.coupling[local])

    def candidate_slice(self, x1: int):
        """Tuples ``(x1, v_2, .., v_K)`` that may score above zero.

        Returns ``(coords, values)``: ``coords[i]`` holds global node ids of
        graph ``i + 1`` for each candidate; everything else scores 0.
        """
        b = int(self.cluster_of[0][x1])
        if b < 0:
            return [np.zeros(0, dtype=np.int64) for _ in range(self.K - 1)], np.zeros(0)
        block = self.blocks[b]
        sub = block.coupling[self.local_index[0][x1]]
        grids = np.meshgrid(*[np.asarray(m) for m in block.members[1:]], indexing="ij")
        return [g.ravel() for g in grids], sub.ravel()

    def metadata(self) -> dict:
        return {
            "K": self.K,
            "M": self.M,
            "seed": self.config.get("seed"),
            "node_counts": list(self.node_counts),
            "config": self.config,
            "clusters": [[np.asarray(m).tolist() for m in b.members] for b in self.blocks],
            "storage": {"allocated_elements": self.allocated_elements,
                        "flat_elements": self.flat_elements,
                        "block_elements": [tensor_elements(b.shape) for b in self.blocks]},
            **self.extra,
        }


def storage_report(clusters: ClusterAlignment) -> list:
    return [tensor_elements(row) for row in clusters.sizes()]


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except HotError as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(name, exc) from exc


def cluster_problem(problem: MultiNetworkProblem, config: RunConfig, embeddings=None):
    """Run the embedding and co-clustering stages; returns ``(embeddings, clusters, state)``."""
    if embeddings is None:
        embeddings = _stage("embedding", build_embeddings, problem, config.beta, config.use_attributes)
    M = config.cluster_count(problem.node_counts)
    if M > min(problem.node_counts):
        raise StageError("clustering", ConfigurationError(
            f"cluster count {M} exceeds the smallest graph ({min(problem.node_counts)} nodes)"))
    if M == 1:
        assign = [np.zeros(n, dtype=np.int64) for n in problem.node_counts]
        return embeddings, ClusterAlignment(assign, 1), None
    if config.barycenter_features == "attr":
        if any(g.attributes is None for g in problem.graphs):
            raise StageError("clustering", ConfigurationError("barycenter_features='attr' needs node attributes"))
        feats = [g.attributes for g in problem.graphs]
    else:
        feats = list(embeddings.Z)
    adjs = [g.adjacency for g in problem.graphs]
    solver = config.solver()
    state = _stage("clustering", barycenter_bcd, feats, adjs, M, solver, seed=config.seed,
                   rounds=config.bcd_rounds, prox_steps=config.bcd_prox_steps)
    return embeddings, _stage("clustering", assign_clusters, state), state


def hot_align(problem: MultiNetworkProblem, config: RunConfig = RunConfig()) -> AlignmentResult:
    timings = {}
    t0 = time.perf_counter()
    embeddings = _stage("embedding", build_embeddings, problem, config.beta, config.use_attributes)
    timings["embedding"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    _, clusters, state = cluster_problem(problem, config, embeddings)
    timings["clustering"] = time.perf_counter() - t0

    for j, elements in enumerate(storage_report(clusters)):
        if elements > config.element_budget:
            sizes = clusters.sizes()[j].tolist()
            raise StageError("node-alignment", CapacityError(
                f"cluster {j} needs a {'x'.join(map(str, sizes))} tensor ({elements:.3g} elements), "
                f"over the budget of {config.element_budget:.3g}; use more clusters (--clusters)",
                cluster=j, elements=elements, budget=config.element_budget))

    solver = config.solver()
    adjs = [g.dense_adjacency() for g in problem.graphs]

    def solve(j):
        members = tuple(clusters.members(j))
        if all(len(m) == 1 for m in members):
            return AlignmentBlock(j, members, np.ones((1,) * problem.K), [])
        feats = [embeddings.Z[i][m] for i, m in enumerate(members)]
        intra = [adjs[i][np.ix_(m, m)] for i, m in enumerate(members)]
        sub = MfgwProblem.from_features(feats, intra, alpha=config.alpha)
        res = _stage("node-alignment", solve_node_alignment, sub, solver)
        return AlignmentBlock(j, members, res.coupling, res.objective_trace)

    t0 = time.perf_counter()
    ids = range(clusters.n_clusters)
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            blocks = list(pool.map(solve, ids))
    else:
        blocks = [solve(j) for j in ids]
    timings["node_alignment"] = time.perf_counter() - t0

    extra = {"objective_final": [b.objective_trace[-1] if b.objective_trace else 0.0 for b in blocks]}
    if state is not None:
        extra["barycenter_trace"] = list(state.objective_trace)
    return AlignmentResult(blocks, problem.node_counts, config.to_dict(), timings, extra)


# ---------------------------------------------------------------- file format


def write_alignment(result: AlignmentResult, path, threshold: Optional[float] = None):
    """Header JSON line, then ``j i_1 .. i_K score`` for every entry at or above ``threshold``."""
    if threshold is None:
        threshold = result.config.get("emit_threshold", 1e-9)
    header = {"meta": result.metadata(), "timings": result.timings}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for j, block in enumerate(result.blocks):
            idx = np.argwhere(block.coupling >= threshold)
            for local in idx:
                glob = [int(block.members[i][l]) for i, l in enumerate(local)]
                score = float(block.coupling[tuple(local)])
                fh.write(f"{j} {' '.join(map(str, glob))} {score!r}\n")


def read_alignment(path) -> AlignmentResult:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
            meta = header["meta"]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise FormatError("first line must be the JSON header", path, 1) from None
        K = meta["K"]
        members = [tuple(np.asarray(m, dtype=np.int64) for m in c) for c in meta["clusters"]]
        couplings = [np.zeros(tuple(len(m) for m in c)) for c in members]
        lookup = []
        for c in members:
            lookup.append([{int(v): p for p, v in enumerate(m)} for m in c])
        for lineno, raw in enumerate(fh, 2):
            parts = raw.split()
            if not parts:
                continue
            if len(parts) != K + 2:
                raise FormatError(f"expected {K + 2} fields", path, lineno)
            try:
                j = int(parts[0])
                nodes = [int(v) for v in parts[1:K + 1]]
                score = float(parts[K + 1])
                local = tuple(lookup[j][i][v] for i, v in enumerate(nodes))
            except (ValueError, KeyError, IndexError):
                raise FormatError(f"bad alignment entry {raw.strip()!r}", path, lineno) from None
            couplings[j][local] = score
    blocks = [AlignmentBlock(j, m, c) for j, (m, c) in enumerate(zip(members, couplings))]
    extra = {k: v for k, v in meta.items()
             if k not in ("K", "M", "seed", "node_counts", "config", "clusters", "storage")}
    return AlignmentResult(blocks, meta["node_counts"], meta.get("config"), header.get("timings"), extra)
