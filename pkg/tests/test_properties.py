"""Property-based checks over randomly drawn small inputs."""

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from hotalign.barycenter import assign_clusters
from hotalign.metrics import evaluate
from hotalign.mfgw import MfgwProblem, mfgw_L_tensor, solve_node_alignment
from hotalign.ot import marginal_errors, marginal_sum, round_to_polytope, sinkhorn_mm
from hotalign.pipeline import AlignmentBlock, AlignmentResult

from oracles import gw_sum_loops

SETTINGS = settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def measures(draw, max_k=3, max_n=4):
    K = draw(st.integers(2, max_k))
    shape = tuple(draw(st.integers(1, max_n)) for _ in range(K))
    seed = draw(st.integers(0, 2 ** 31))
    rng = np.random.default_rng(seed)
    mus = [rng.random(n) + 0.05 for n in shape]
    return shape, [m / m.sum() for m in mus], rng


@SETTINGS
@given(measures(), st.floats(0.05, 1.0))
def test_sinkhorn_marginals_and_mass(data, lam):
    shape, mus, rng = data
    res = sinkhorn_mm(rng.random(shape), mus, lam, tol=1e-10, max_iters=5000)
    assert max(marginal_errors(res.coupling, mus)) <= 1e-6
    assert abs(res.coupling.sum() - 1) <= 1e-9
    assert (res.coupling >= 0).all()


@SETTINGS
@given(measures(), st.floats(-50, 50))
def test_sinkhorn_shift_invariance(data, shift):
    shape, mus, rng = data
    Q = rng.random(shape)
    a = sinkhorn_mm(Q, mus, 0.1).coupling
    b = sinkhorn_mm(Q + shift, mus, 0.1).coupling
    assert np.abs(a - b).max() <= 1e-9


@SETTINGS
@given(measures())
def test_rounding_lands_on_polytope(data):
    shape, mus, rng = data
    S = rng.random(shape)
    X = round_to_polytope(S / S.sum(), mus)
    for k, mu in enumerate(mus):
        assert np.abs(marginal_sum(X, k) - mu).sum() <= 1e-12
    assert (X >= 0).all()


@SETTINGS
@given(measures(max_k=3, max_n=3))
def test_gw_term_matches_loops(data):
    shape, mus, rng = data
    Cs = []
    for n in shape:
        A = rng.random((n, n))
        Cs.append(A + A.T)
    S = rng.random(shape)
    S /= S.sum()
    assert abs(np.vdot(mfgw_L_tensor(Cs, S), S) - gw_sum_loops(Cs, S)) <= 1e-9


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.0, 1.0))
def test_solver_feasible_and_monotone(seed, alpha):
    rng = np.random.default_rng(seed)
    shape = tuple(int(v) for v in rng.integers(2, 5, size=3))
    feats = [rng.random((n, 2)) for n in shape]
    adjs = []
    for n in shape:
        A = np.triu((rng.random((n, n)) < 0.5).astype(float), 1)
        adjs.append(A + A.T)
    p = MfgwProblem.from_features(feats, adjs, alpha=alpha)
    res = solve_node_alignment(p)
    assert max(marginal_errors(res.coupling, p.marginals)) <= 1e-6
    assert abs(res.coupling.sum() - 1) <= 1e-9
    assert max(np.diff(res.objective_trace), default=0.0) <= 1e-8


@SETTINGS
@given(st.integers(0, 2 ** 31))
def test_assignment_scale_invariant(seed):
    rng = np.random.default_rng(seed)
    n, M = int(rng.integers(3, 7)), int(rng.integers(2, 4))
    S = [rng.random((n, M)) for _ in range(3)]
    scaled = [s * rng.uniform(0.01, 100, size=(n, 1)) for s in S]
    a, b = assign_clusters(S), assign_clusters(scaled)
    assert a.n_clusters == b.n_clusters
    assert all(np.array_equal(x, y) for x, y in zip(a.assignment, b.assignment))


@st.composite
def block_results(draw):
    seed = draw(st.integers(0, 2 ** 31))
    rng = np.random.default_rng(seed)
    K = int(rng.integers(2, 4))
    counts = tuple(int(v) for v in rng.integers(2, 6, size=K))
    M = int(rng.integers(1, min(counts) + 1))
    assign = [rng.permutation(np.arange(n) % M) for n in counts]
    blocks = []
    for j in range(M):
        members = tuple(np.flatnonzero(a == j) for a in assign)
        T = rng.random(tuple(len(m) for m in members)) * (rng.random(tuple(len(m) for m in members)) < 0.7)
        blocks.append(AlignmentBlock(j, members, T))
    truth = np.stack([rng.integers(0, n, size=4) for n in counts], axis=1)
    return AlignmentResult(blocks, counts), truth


@SETTINGS
@given(block_results(), st.sampled_from(["global", "cluster"]))
def test_hit_rates_dominance_and_monotone(data, scope):
    res, truth = data
    ks = (1, 2, 3, 5, 10)
    rep = evaluate(res, truth, k_list=ks, rank_scope=scope)
    for k in ks:
        assert rep.high_order[k] <= rep.pairwise[k]
    for a, b in zip(ks, ks[1:]):
        assert rep.pairwise[a] <= rep.pairwise[b]
        assert rep.high_order[a] <= rep.high_order[b]
    assert 0 < rep.mrr <= 1
