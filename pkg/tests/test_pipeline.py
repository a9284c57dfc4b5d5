import json

import numpy as np
import pytest

from hotalign.config import RunConfig
from hotalign.errors import CapacityError, FormatError, StageError, ValidationError
from hotalign.graph import generate_noisy_er
from hotalign.ot import marginal_errors
from hotalign.pipeline import AlignmentBlock, AlignmentResult, hot_align, read_alignment, write_alignment


def _toy_result():
    # graph sizes 4, 3, 3; cluster 0 = {0,1},{0,1},{0} and cluster 1 = {2,3},{2},{1,2}
    rng = np.random.default_rng(0)
    b0 = rng.random((2, 2, 1))
    b1 = rng.random((2, 1, 2))
    blocks = [AlignmentBlock(0, (np.array([0, 1]), np.array([0, 1]), np.array([0])), b0),
              AlignmentBlock(1, (np.array([2, 3]), np.array([2]), np.array([1, 2])), b1)]
    return AlignmentResult(blocks, (4, 3, 3), {"seed": 0})


def test_lookup_inside_and_across_blocks():
    r = _toy_result()
    assert r.lookup_score((1, 0, 0)) == r.blocks[0].coupling[1, 0, 0]
    assert r.lookup_score((3, 2, 2)) == r.blocks[1].coupling[1, 0, 1]
    assert r.lookup_score((0, 2, 1)) == 0.0
    assert r.lookup_score((2, 0, 0)) == 0.0
    with pytest.raises(ValidationError):
        r.lookup_score((0, 0))
    with pytest.raises(ValidationError):
        r.lookup_score((0, 0, 3))


def test_block_sum_through_lookup():
    r = _toy_result()
    total = sum(r.lookup_score((a, b, c)) for a in range(4) for b in range(3) for c in range(3))
    assert total == pytest.approx(sum(b.coupling.sum() for b in r.blocks), abs=1e-12)


def test_candidate_slice_covers_block():
    r = _toy_result()
    coords, values = r.candidate_slice(3)
    for v2, v3, s in zip(coords[0], coords[1], values):
        assert r.lookup_score((3, v2, v3)) == s
    assert len(values) == 2


def test_storage_accounting():
    r = _toy_result()
    assert r.allocated_elements == 2 * 2 * 1 + 2 * 1 * 2
    assert r.flat_elements == 36
    # five equal clusters of 20 out of 100 per graph
    members = [tuple(np.arange(20 * j, 20 * (j + 1)) for _ in range(3)) for j in range(5)]
    blocks = [AlignmentBlock(j, m, np.zeros((1, 1, 1))) for j, m in enumerate(members)]
    big = AlignmentResult(blocks, (100, 100, 100))
    assert big.allocated_elements == 5 * 20 ** 3
    assert big.allocated_elements / big.flat_elements == pytest.approx(1 / 25)


def test_overlapping_blocks_rejected():
    m = (np.array([0]), np.array([0]))
    with pytest.raises(ValidationError):
        AlignmentResult([AlignmentBlock(0, m, np.ones((1, 1))), AlignmentBlock(1, m, np.ones((1, 1)))], (1, 1))


def _small_problem(seed=0, n=24):
    return generate_noisy_er(n, 0.25, k=3, insert_frac=0, remove_frac=0, seed=seed, anchor_count=4)


def test_single_cluster_is_one_block():
    pr = _small_problem(n=12)
    res = hot_align(pr, RunConfig(clusters=1))
    assert res.M == 1
    assert res.blocks[0].shape == (12, 12, 12)
    mus = [np.full(12, 1 / 12)] * 3
    assert max(marginal_errors(res.blocks[0].coupling, mus)) <= 1e-6
    assert set(res.timings) == {"embedding", "clustering", "node_alignment"}


def test_hierarchical_blocks_partition_nodes():
    pr = _small_problem()
    res = hot_align(pr, RunConfig(clusters=2, seed=1))
    assert res.M == 2
    for i in range(3):
        assert (res.cluster_of[i] >= 0).all()
    assert res.allocated_elements == sum(int(np.prod(b.shape)) for b in res.blocks)
    for b in res.blocks:
        assert abs(b.coupling.sum() - 1) <= 1e-9


def test_capacity_error_names_cluster():
    pr = _small_problem()
    with pytest.raises(StageError) as info:
        hot_align(pr, RunConfig(clusters=1, element_budget=100))
    assert isinstance(info.value.cause, CapacityError)
    assert "cluster 0" in str(info.value) and "--clusters" in str(info.value)
    assert info.value.exit_code == 3


def test_too_many_clusters():
    pr = _small_problem(n=12)
    with pytest.raises(StageError):
        hot_align(pr, RunConfig(clusters=13))


def test_singleton_blocks_get_unit_mass():
    pr = _small_problem(n=6)
    res = hot_align(pr, RunConfig(clusters=6, seed=0))
    for b in res.blocks:
        if all(len(m) == 1 for m in b.members):
            assert b.coupling.shape == (1, 1, 1) and b.coupling[0, 0, 0] == 1.0


def test_write_read_round_trip(tmp_path):
    pr = _small_problem()
    res = hot_align(pr, RunConfig(clusters=2, seed=0))
    write_alignment(res, tmp_path / "a.aln", threshold=0.0)
    back = read_alignment(tmp_path / "a.aln")
    assert back.metadata() == res.metadata()
    for a, b in zip(res.blocks, back.blocks):
        assert np.array_equal(a.coupling, b.coupling)
    header = json.loads((tmp_path / "a.aln").read_text().splitlines()[0])
    assert header["meta"]["storage"]["allocated_elements"] == res.allocated_elements


def test_threshold_drops_small_entries(tmp_path):
    r = _toy_result()
    write_alignment(r, tmp_path / "a.aln", threshold=0.5)
    back = read_alignment(tmp_path / "a.aln")
    for a, b in zip(r.blocks, back.blocks):
        assert np.array_equal(np.where(a.coupling >= 0.5, a.coupling, 0), b.coupling)


@pytest.mark.parametrize("text", ["not json\n", '{"meta": {"K": 3, "clusters": [[[0], [0], [0]]], '
                                  '"node_counts": [1, 1, 1]}}\n0 0 0 x\n'])
def test_read_rejects_bad_files(tmp_path, text):
    (tmp_path / "bad.aln").write_text(text)
    with pytest.raises(FormatError):
        read_alignment(tmp_path / "bad.aln")


def test_runs_are_deterministic():
    pr = _small_problem(seed=3)
    cfg = RunConfig(clusters=2, seed=5)
    a, b = hot_align(pr, cfg), hot_align(pr, cfg)
    assert json.dumps(a.metadata(), sort_keys=True) == json.dumps(b.metadata(), sort_keys=True)
    for x, y in zip(a.blocks, b.blocks):
        assert np.abs(x.coupling - y.coupling).max() <= 1e-12


def test_threads_match_serial():
    pr = _small_problem(seed=2)
    a = hot_align(pr, RunConfig(clusters=2, seed=0))
    b = hot_align(pr, RunConfig(clusters=2, seed=0, workers=2))
    for x, y in zip(a.blocks, b.blocks):
        assert np.array_equal(x.coupling, y.coupling)
