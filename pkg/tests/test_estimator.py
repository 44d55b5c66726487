
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vrmrf.ingest import MISSING, GenotypeMatrix
from vrmrf.estimator import (
    NeighborhoodParams,
    conditional_mle,
    count_contexts,
    estimate_all,
    estimate_neighborhood,
    log_conditional_likelihood,
    penalty,
    pml_score,
    score_grid,
)


def windows_matrix(rows, alphabet_size=3):
    """Matrix whose columns are the given per-individual windows."""
    return GenotypeMatrix.from_array(np.array(rows, dtype=np.uint8).T, alphabet_size)


def random_matrix(seed, m=8, n=300, a=3, copy=0.6, missing=0.0, chromosomes=None):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, a, size=(m, n)).astype(np.uint8)
    for i in range(1, m):
        keep = rng.random(n) < copy
        x[i] = np.where(keep, x[i - 1], x[i])
    if missing:
        x[rng.random((m, n)) < missing] = MISSING
    return GenotypeMatrix.from_array(x, a, chromosomes=chromosomes)


def test_count_contexts_hand_count():
    m = windows_matrix([(0, 1, 0), (0, 1, 1), (1, 1, 0), (0, 1, 0)])
    cc = count_contexts(m, 1, 1, 1)
    assert cc[(0,), (0,)].tolist() == [0, 2, 0]
    assert cc[(0,), (1,)].tolist() == [0, 1, 0]
    assert cc[(1,), (0,)].tolist() == [0, 1, 0]
    assert cc[(1,), (1,)].tolist() == [0, 0, 0]
    assert cc.effective_n == 4 and cc.counts.sum() == 4


def test_count_contexts_empty_context():
    m = windows_matrix([(0, 1, 0), (0, 2, 1), (1, 1, 0)])
    cc = count_contexts(m, 1, 0, 0)
    assert cc[(), ()].tolist() == [0, 2, 1]


def test_count_contexts_skips_missing():
    m = windows_matrix([(0, 1, 0), (0, 1, MISSING), (1, 1, 0)])
    assert count_contexts(m, 1, 1, 1).effective_n == 2
    assert count_contexts(m, 1, 1, 0).effective_n == 3


def test_count_contexts_rejects_chromosome_crossing():
    m = GenotypeMatrix.from_array(np.zeros((3, 4), dtype=np.uint8), chromosomes=[1, 1, 2])
    with pytest.raises(ValueError, match="chromosome"):
        count_contexts(m, 1, 0, 1)
    with pytest.raises(ValueError):
        count_contexts(m, 0, 1, 0)


def test_conditional_mle_examples():
    assert conditional_mle([3, 1, 0]).tolist() == [0.75, 0.25, 0.0]
    assert conditional_mle([0, 0, 0]) == pytest.approx([1 / 3] * 3)
    assert conditional_mle([5, 0, 0]).tolist() == [1.0, 0.0, 0.0]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=2, max_size=6))
def test_conditional_mle_is_distribution(counts):
    p = conditional_mle(counts)
    assert (p >= 0).all() and abs(p.sum() - 1) < 1e-12


def test_log_likelihood_examples():
    # single empty context, centre counts (2, 2, 0): 4 * log3(0.5)
    m = GenotypeMatrix.from_array(np.array([[0, 0, 1, 1]], dtype=np.uint8), 3)
    ll = log_conditional_likelihood(count_contexts(m, 0, 0, 0))
    assert ll == pytest.approx(-2.523719014285830, abs=1e-12)
    det = windows_matrix([(0, 1), (1, 2), (0, 1), (2, 0)])
    assert log_conditional_likelihood(count_contexts(det, 1, 1, 0)) == 0.0
    empty = GenotypeMatrix.from_array(np.full((2, 3), MISSING, dtype=np.uint8))
    cc = count_contexts(empty, 0, 0, 1)
    assert cc.effective_n == 0 and log_conditional_likelihood(cc) == 0.0


def test_penalty_examples():
    assert penalty(1, 1, 3, 1000, 1.0) == pytest.approx(56.58938840581338, abs=1e-9)
    assert penalty(0, 0, 3, 3, 1.0) == pytest.approx(1.0, abs=1e-15)


def test_pml_is_ll_minus_penalty():
    m = random_matrix(3, n=1000)
    params = NeighborhoodParams(1.0, 2, 2)
    for l, r in [(0, 0), (1, 1), (2, 1)]:
        ll = log_conditional_likelihood(count_contexts(m, 3, l, r))
        assert pml_score(m, 3, l, r, params) == ll - penalty(l, r, 3, 1000, 1.0)
    assert pml_score(m, 3, 1, 1, params) == pytest.approx(
        log_conditional_likelihood(count_contexts(m, 3, 1, 1)) - 56.58938840581338)


def test_small_c_approaches_raw_likelihood():
    m = random_matrix(4)
    ll = log_conditional_likelihood(count_contexts(m, 2, 1, 1))
    assert pml_score(m, 2, 1, 1, NeighborhoodParams(1e-12, 1, 1)) == pytest.approx(ll, abs=1e-8)


def test_independent_site_gives_empty_neighborhood():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 3, size=(5, 5000)).astype(np.uint8)
    m = GenotypeMatrix.from_array(x)
    assert [(nb.l_hat, nb.r_hat) for nb in estimate_all(m, NeighborhoodParams(1.0, 2, 2))] \
        == [(0, 0)] * 5


def test_tie_prefers_right_arm_at_equal_size():
    rng = np.random.default_rng(11)
    mid = rng.integers(0, 2, size=500)
    side = np.where(rng.random(500) < 0.85, mid, 1 - mid)
    m = GenotypeMatrix.from_array(np.vstack([side, mid, side]).astype(np.uint8), 2)
    params = NeighborhoodParams(1.0, 1, 1)
    grid = score_grid(m, 1, params)
    assert grid[(0, 1)] == grid[(1, 0)]
    assert max(grid.values()) == grid[(0, 1)]
    nb = estimate_neighborhood(m, 1, params)
    assert (nb.l_hat, nb.r_hat) == (0, 1)


def test_single_site_and_chromosome_truncation():
    one = GenotypeMatrix.from_array(np.array([[0, 1, 2, 1]], dtype=np.uint8))
    assert [(nb.l_hat, nb.r_hat) for nb in estimate_all(one, NeighborhoodParams())] == [(0, 0)]
    rng = np.random.default_rng(1)
    col = rng.integers(0, 3, 400).astype(np.uint8)
    two = GenotypeMatrix.from_array(np.vstack([col, col]), chromosomes=[1, 2])
    assert [(nb.l_hat, nb.r_hat) for nb in estimate_all(two, NeighborhoodParams())] \
        == [(0, 0), (0, 0)]


def test_grid_restricted_to_chromosome():
    m = random_matrix(5, m=6, chromosomes=[1, 1, 1, 2, 2, 2], copy=0.9)
    for nb in estimate_all(m, NeighborhoodParams(0.1, 3, 3)):
        first = 0 if nb.site < 3 else 3
        assert nb.site - nb.l_hat >= first and nb.site + nb.r_hat <= first + 2


def test_max_arms_zero():
    m = random_matrix(6, copy=0.9)
    assert all((nb.l_hat, nb.r_hat) == (0, 0)
               for nb in estimate_all(m, NeighborhoodParams(1.0, 0, 0)))


@pytest.mark.parametrize("seed", range(5))
def test_vectorized_matches_per_site_scores(seed):
    m = random_matrix(seed, m=7, n=250, missing=0.05 * (seed % 2))
    params = NeighborhoodParams(0.7, 2, 3)
    for nb in estimate_all(m, params):
        grid = score_grid(m, nb.site, params)
        assert nb.pml_score == pytest.approx(grid[(nb.l_hat, nb.r_hat)], abs=1e-9)
        assert nb.pml_score >= max(grid.values()) - 1e-9


def test_dense_and_sparse_paths_agree():
    m = random_matrix(8, m=9, n=400, missing=0.02)
    dense = estimate_all(m, NeighborhoodParams(0.5, 3, 3))
    sparse = estimate_all(m, NeighborhoodParams(0.5, 3, 3, dense_limit=1))
    assert [(a.l_hat, a.r_hat, a.effective_n_at_opt) for a in dense] == \
        [(b.l_hat, b.r_hat, b.effective_n_at_opt) for b in sparse]
    assert np.allclose([a.pml_score for a in dense], [b.pml_score for b in sparse],
                       rtol=0, atol=1e-9)


def test_estimate_all_equals_per_site_map():
    m = random_matrix(9, m=10, n=300, missing=0.03)
    params = NeighborhoodParams(1.0, 2, 2)
    assert estimate_all(m, params) == [estimate_neighborhood(m, s, params)
                                       for s in range(m.n_sites)]


def test_estimate_all_worker_invariance():
    m = random_matrix(10, m=30, n=200)
    params = NeighborhoodParams(1.0, 2, 2)
    import vrmrf.estimator as est
    old = est.CHUNK_SITES
    est.CHUNK_SITES = 7
    try:
        assert estimate_all(m, params, workers=1) == estimate_all(m, params, workers=3)
    finally:
        est.CHUNK_SITES = old


def test_permutation_invariance():
    m = random_matrix(12, m=6, n=400, missing=0.02)
    perm = np.random.default_rng(0).permutation(m.n_individuals)
    params = NeighborhoodParams(0.5, 2, 2)
    a = estimate_all(m, params)
    b = estimate_all(m.subset_individuals(perm), params)
    assert [(x.l_hat, x.r_hat) for x in a] == [(y.l_hat, y.r_hat) for y in b]
    assert np.allclose([x.pml_score for x in a], [y.pml_score for y in b], atol=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_likelihood_nesting(seed):
    m = random_matrix(seed, m=7, n=150, a=2 + seed % 2, missing=0.03 * (seed % 3))
    site = 3
    ll = {(l, r): log_conditional_likelihood(count_contexts(m, site, l, r))
          for l in range(4) for r in range(4)}
    for (l, r), v in ll.items():
        for (l2, r2), v2 in ll.items():
            if l2 >= l and r2 >= r:
                assert v2 >= v - 1e-9


def test_params_validation():
    with pytest.raises(ValueError):
        NeighborhoodParams(0.0)
    with pytest.raises(ValueError):
        NeighborhoodParams(1.0, -1, 0)
