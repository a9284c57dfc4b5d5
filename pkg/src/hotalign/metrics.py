"""Alignment evaluation: pairwise and high-order Hits@K, MRR, pairwise composition, fold splits."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .config import DEFAULT_K_LIST
from .errors import ConfigurationError, ValidationError

TIE_RULE = "lexicographic"


def _rank(values, lex, true_value, true_lex):
    """1-based rank of a candidate among ``values`` (higher first, ties by ascending ``lex``)."""
    above = int(np.count_nonzero(values > true_value))
    tied = int(np.count_nonzero((values == true_value) & (lex < true_lex)))
    return above + tied + 1


def _positive_rank(values, lex, true_value, true_lex):
    if true_value > 0:
        return _rank(values, lex, true_value, true_lex)
    return int(np.count_nonzero(values > 0)) + 1


class PairwiseComposition:
    """Virtual K-way scorer ``score(v) = prod_{j<k} S_jk(v_j, v_k)`` built from pairwise alignments."""

    def __init__(self, pair_matrices: dict, K: Optional[int] = None):
        if K is None:
            K = 1 + max(max(p) for p in pair_matrices)
        self.K = K
        self.pairs = {}
        for j, k in combinations(range(K), 2):
            if (j, k) in pair_matrices:
                S = np.asarray(pair_matrices[(j, k)], dtype=float)
            elif (k, j) in pair_matrices:
                S = np.asarray(pair_matrices[(k, j)], dtype=float).T
            else:
                raise ConfigurationError(f"missing pairwise alignment matrix for graphs ({j}, {k})")
            self.pairs[(j, k)] = S
        counts = [self.pairs[(0, 1)].shape[0]] + [self.pairs[(0, k)].shape[1] for k in range(1, K)]
        for (j, k), S in self.pairs.items():
            if S.shape != (counts[j], counts[k]):
                raise ConfigurationError(f"pair ({j}, {k}) matrix has shape {S.shape}, "
                                         f"expected {(counts[j], counts[k])}")
        self.node_counts = tuple(counts)

    def score(self, nodes) -> float:
        nodes = tuple(int(v) for v in nodes)
        return float(np.prod([S[nodes[j], nodes[k]] for (j, k), S in self.pairs.items()]))

    lookup_score = score

    def slice_tensor(self, x1: int) -> np.ndarray:
        K = self.K
        T = np.ones(self.node_counts[1:])
        for (j, k), S in self.pairs.items():
            if j == 0:
                shape = [1] * (K - 1)
                shape[k - 1] = self.node_counts[k]
                T = T * S[x1].reshape(shape)
            else:
                shape = [1] * (K - 1)
                shape[j - 1], shape[k - 1] = self.node_counts[j], self.node_counts[k]
                T = T * S.reshape(shape)
        return T

    def candidate_slice(self, x1: int):
        T = self.slice_tensor(x1)
        grids = np.meshgrid(*[np.arange(n) for n in self.node_counts[1:]], indexing="ij")
        return [g.ravel() for g in grids], T.ravel()


def compose_pairwise(pair_matrices: dict, K: Optional[int] = None) -> PairwiseComposition:
    return PairwiseComposition(pair_matrices, K)


@dataclass
class EvalReport:
    k_list: tuple
    pairwise: dict
    high_order: dict
    mrr: float
    n_test: int
    per_pair: dict = field(default_factory=dict)
    rank_scope: str = "global"
    tie_rule: str = TIE_RULE
    ranks: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "k_list": list(self.k_list),
            "pairwise_hits": {str(k): v for k, v in self.pairwise.items()},
            "high_order_hits": {str(k): v for k, v in self.high_order.items()},
            "mrr": self.mrr,
            "n_test": self.n_test,
            "per_pair_hits": {str(i): {str(k): v for k, v in d.items()} for i, d in self.per_pair.items()},
            "rank_scope": self.rank_scope,
            "tie_rule": self.tie_rule,
        }


@dataclass
class FoldSummary:
    reports: list

    def _stat(self, get):
        vals = np.array([get(r) for r in self.reports], dtype=float)
        return float(vals.mean()), float(vals.std(ddof=1)) if len(vals) > 1 else 0.0

    def rows(self):
        k_list = self.reports[0].k_list
        out = []
        for k in k_list:
            out.append(("pairwise_hits", k) + self._stat(lambda r: r.pairwise[k]))
        for k in k_list:
            out.append(("high_order_hits", k) + self._stat(lambda r: r.high_order[k]))
        out.append(("mrr", "") + self._stat(lambda r: r.mrr))
        return out

    def to_dict(self) -> dict:
        return {"folds": len(self.reports),
                "summary": [dict(zip(("metric", "K", "mean", "stddev"), r)) for r in self.rows()],
                "reports": [r.to_dict() for r in self.reports]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "K", "mean", "stddev"])
        for row in self.rows():
            w.writerow([row[0], row[1], repr(row[2]), repr(row[3])])
        return buf.getvalue()


def summarize(reports: Sequence[EvalReport]) -> FoldSummary:
    if not reports:
        raise ValidationError("no reports to summarize")
    return FoldSummary(list(reports))


def _test_tuples(truth, anchors, counts):
    truth = np.asarray(truth, dtype=np.int64)
    K = len(counts)
    if truth.ndim != 2 or truth.shape[1] != K:
        raise ValidationError(f"truth tuples must have {K} columns")
    for i, n in enumerate(counts):
        bad = (truth[:, i] < 0) | (truth[:, i] >= n)
        if bad.any():
            raise ValidationError(f"truth tuple {int(np.flatnonzero(bad)[0])} has an invalid node for graph {i}")
    if anchors is not None and len(anchors):
        anchor_set = {tuple(map(int, a)) for a in np.asarray(anchors, dtype=np.int64)}
        truth = np.array([t for t in truth if tuple(map(int, t)) not in anchor_set], dtype=np.int64)
    if len(truth) == 0:
        raise ValidationError("no test tuples left after removing anchors")
    return truth.reshape(-1, K)


def _first_appearance(order, coords, values, tup, K):
    """Position (1-based) of the first positive tuple in ``order`` holding each true counterpart."""
    out = np.full(K - 1, np.iinfo(np.int64).max, dtype=np.int64)
    for i in range(1, K):
        hit = np.flatnonzero((coords[i - 1][order] == int(tup[i])) & (values[order] > 0))
        if len(hit):
            out[i - 1] = hit[0] + 1
    return out


def evaluate(result, truth, anchors=None, k_list=DEFAULT_K_LIST, rank_scope: str = "global") -> EvalReport:
    """Hits@K and MRR of a K-way alignment against ground-truth tuples.

    ``result`` is an ``AlignmentResult`` or a composed pairwise scorer. For
    each test tuple the candidates are all ``(x_1, v_2, .., v_K)``; entries
    outside ``x_1``'s block score 0. Candidates are ordered by score, ties by
    lexicographic index. A high-order hit at K needs the true tuple among the
    top K positive-scored candidates; a pairwise hit needs some true
    counterpart ``x_i`` to appear in one of them. Zero-scored tuples are
    never hits; for MRR a zero-scored truth ranks after every positive one.
    ``rank_scope="cluster"`` ranks only inside the block, with a truth
    outside it ranked after every block candidate.

    ``per_pair`` reports, for each graph ``i``, hits of the true ``x_i``
    within row ``x_1`` of the assembled pair marginal between graphs 1 and i.
    """
    if rank_scope not in ("global", "cluster"):
        raise ConfigurationError("rank_scope must be 'global' or 'cluster'")
    counts = tuple(result.node_counts)
    K = len(counts)
    k_list = tuple(int(k) for k in k_list)
    tests = _test_tuples(truth, anchors, counts)
    tail = counts[1:]
    row_ranks = np.zeros((len(tests), K - 1), dtype=np.int64)
    first_seen = np.zeros((len(tests), K - 1), dtype=np.int64)
    ho_ranks = np.zeros(len(tests), dtype=np.int64)
    positive = np.zeros(len(tests), dtype=bool)
    for t, tup in enumerate(tests):
        coords, values = result.candidate_slice(int(tup[0]))
        values = np.asarray(values, dtype=float)
        coords = [np.asarray(c, dtype=np.int64) for c in coords]
        for i in range(1, K):
            row = np.bincount(coords[i - 1], weights=values, minlength=counts[i]) if len(values) else np.zeros(counts[i])
            node = int(tup[i])
            row_ranks[t, i - 1] = _positive_rank(row, np.arange(counts[i]), row[node], node)
        lex = np.ravel_multi_index(tuple(coords), tail) if len(values) else np.zeros(0, dtype=np.int64)
        order = np.lexsort((lex, -values))
        first_seen[t] = _first_appearance(order, coords, values, tup, K)
        true_lex = int(np.ravel_multi_index(tuple(int(v) for v in tup[1:]), tail))
        hit = np.flatnonzero(lex == true_lex)
        true_val = float(values[hit[0]]) if len(hit) else 0.0
        positive[t] = true_val > 0
        if rank_scope == "cluster" and true_val <= 0:
            ho_ranks[t] = _rank(values, lex, 0.0, true_lex) if len(hit) else len(values) + 1
        else:
            ho_ranks[t] = _positive_rank(values, lex, true_val, true_lex)
    best_pair = first_seen.min(axis=1)
    pairwise = {k: float(np.mean(best_pair <= k)) for k in k_list}
    high = {k: float(np.mean(positive & (ho_ranks <= k))) for k in k_list}
    per_pair = {i: {k: float(np.mean(row_ranks[:, i - 1] <= k)) for k in k_list} for i in range(1, K)}
    return EvalReport(k_list, pairwise, high, float(np.mean(1.0 / ho_ranks)), len(tests), per_pair,
                      rank_scope, TIE_RULE, ho_ranks.tolist())


def split_folds(truth, fold_count: int, seed: int = 0) -> list:
    """Seeded ``fold_count``-way split; configuration ``f`` trains on fold ``f`` and tests on the rest."""
    truth = np.asarray(truth, dtype=np.int64)
    if fold_count < 2:
        raise ValidationError("fold_count must be at least 2")
    if fold_count > len(truth):
        raise ValidationError(f"fold_count {fold_count} exceeds the {len(truth)} available tuples")
    order = np.random.default_rng(seed).permutation(len(truth))
    folds = np.array_split(order, fold_count)
    out = []
    for f in range(fold_count):
        rest = np.concatenate([folds[g] for g in range(fold_count) if g != f])
        out.append((truth[np.sort(folds[f])], truth[np.sort(rest)]))
    return out
