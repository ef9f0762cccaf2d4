import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from audiencediv.ingest import build_ratings, split
from audiencediv.similarity import (
    kendall_sim, kendall_tau_b, neighbors, pearson_sim, similarity_table, user_vector, universe,
)
from conftest import make_panel
import oracles


def pair(n_max=30, hi=4):
    return st.integers(2, n_max).flatmap(
        lambda n: st.tuples(st.lists(st.integers(0, hi), min_size=n, max_size=n),
                            st.lists(st.integers(0, hi), min_size=n, max_size=n)))


def test_identical_and_reversed():
    assert kendall_sim([1, 2, 3], [1, 2, 3]) == 1
    assert kendall_sim([1, 2, 3], [3, 2, 1]) == 0


def test_constant_vector_is_sentinel():
    assert math.isnan(kendall_sim([1, 1, 1], [1, 2, 3]))
    assert math.isnan(pearson_sim([2, 2, 2], [1, 2, 3]))


@given(pair())
def test_tau_b_matches_pair_count(xy):
    x, y = xy
    want = oracles.kendall_tau_b(x, y)
    got = kendall_tau_b(x, y)
    if math.isnan(want):
        assert math.isnan(got)
    else:
        assert abs(got - want) < 1e-12


@given(pair(hi=3))
def test_tau_b_symmetric_and_bounded(xy):
    x, y = xy
    s = kendall_sim(x, y)
    if not math.isnan(s):
        assert 0 <= s <= 1
        assert s == kendall_sim(y, x)


@given(pair(hi=6))
def test_kendall_monotone_invariance(xy):
    x, y = xy
    x3 = [v ** 3 + 2 * v for v in x]
    a, b = kendall_sim(x, y), kendall_sim(x3, np.exp(y))
    assert (math.isnan(a) and math.isnan(b)) or a == pytest.approx(b, abs=1e-12)


def test_pearson_linear():
    x = np.array([0.3, 1.0, 2.5, 4.0])
    assert pearson_sim(x, 2 * x + 1) == pytest.approx(1.0)
    assert pearson_sim(x, -x) == pytest.approx(0.0)


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=20), st.integers(0, 10**6))
def test_pearson_oracle_and_affine_invariance(x, seed):
    y = np.random.default_rng(seed).normal(size=len(x))
    if np.ptp(x) < 1e-6:
        return
    want = (oracles.pearson_r(x, list(y)) + 1) / 2
    assert pearson_sim(x, y) == pytest.approx(want, abs=1e-12)
    assert pearson_sim(3 * np.asarray(x) - 7, 0.5 * y + 2) == pytest.approx(want, abs=1e-9)


def _random_matrix(seed, U=30, D=12, density=0.4):
    rng = np.random.default_rng(seed)
    counts = rng.integers(1, 9, size=(U, D)) * (rng.random((U, D)) < density)
    counts[:, 0] += 1  # keep every user in the panel
    return split(make_panel(counts), "random", 0.7, seed=seed)


def test_user_vector_placement():
    counts = np.array([[0, 2, 0], [1, 1, 1], [3, 0, 1]])
    m = build_ratings(make_panel(counts))
    v = user_vector(m, "u0")
    assert v.shape == (3,) and v[0] == 0 and v[2] == 0 and v[1] == m.train[0, 1]
    with pytest.raises(KeyError):
        user_vector(m, "nobody")


@pytest.mark.parametrize("kernel", ["kendall", "pearson"])
def test_table_matches_pairwise(kernel):
    m = _random_matrix(1)
    table = similarity_table(m, kernel)
    cols = universe(m)
    fn = kendall_sim if kernel == "kendall" else pearson_sim
    vecs = [user_vector(m, u, cols) for u in range(m.shape[0])]
    for a in range(m.shape[0]):
        for b in range(m.shape[0]):
            if a == b:
                continue
            want = fn(vecs[a], vecs[b])
            got = table.sims[a, b]
            assert (math.isnan(want) and math.isnan(got)) or abs(got - want) < 1e-12


def test_table_agrees_with_scipy():
    m = _random_matrix(2)
    table = similarity_table(m, "kendall")
    cols = universe(m)
    x, y = user_vector(m, 0, cols), user_vector(m, 1, cols)
    assert table.sims[0, 1] == pytest.approx((sps.kendalltau(x, y).statistic + 1) / 2, abs=1e-12)


def test_neighbors_match_exhaustive_sort():
    m = _random_matrix(3)
    table = similarity_table(m)
    tc = m.train_counts.toarray()
    for user in range(m.shape[0]):
        for dom in range(m.shape[1]):
            raters = [v for v in range(m.shape[0]) if v != user and tc[v, dom] > 0
                      and not math.isnan(table.sims[user, v])]
            want = sorted(raters, key=lambda v: (-table.sims[user, v], v))[:10]
            got = [v for v, _ in neighbors(table, m, user, dom, 10)]
            assert got == want


def test_single_rater_neighbourhood():
    counts = np.array([[1, 2, 0], [2, 1, 0], [1, 1, 3]])
    m = build_ratings(make_panel(counts))
    table = similarity_table(m)
    assert len(neighbors(table, m, 0, 2, 10)) == 1


def test_equal_similarity_tie_break_by_user_id():
    # users 1 and 2 have identical vectors, hence identical similarity to user 0
    counts = np.array([[3, 1, 1, 0], [1, 2, 0, 1], [1, 2, 0, 1]])
    m = build_ratings(make_panel(counts))
    table = similarity_table(m)
    nb = neighbors(table, m, 0, 1, 10)
    assert [v for v, _ in nb] == [1, 2] and nb[0][1] == nb[1][1]


def test_table_rows_are_symmetric_pairs():
    m = _random_matrix(4, U=8)
    table = similarity_table(m)
    rows = list(table.rows())
    assert all(a < b for a, b, _, _ in rows)
    assert np.allclose(np.nan_to_num(table.sims), np.nan_to_num(table.sims.T))
