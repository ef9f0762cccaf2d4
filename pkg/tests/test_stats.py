import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from audiencediv import stats
from audiencediv.diversity import Level, Metric, profile_domains
from audiencediv.errors import ComputationError, InputError
from audiencediv.ingest import split
from audiencediv.recommender import Algorithm
from audiencediv.similarity import similarity_table
import oracles

seeds = st.integers(0, 2**31)


def test_pearson_identity_and_orthogonal():
    x = np.array([1.0, 2.0, 4.0, 7.0])
    assert stats.pearson(x, x)[0] == pytest.approx(1.0)
    y = np.array([1.0, -1.0, -1.0, 1.0])
    y = y - (y @ (x - x.mean())) / ((x - x.mean()) @ (x - x.mean())) * (x - x.mean())
    assert abs(stats.pearson(x, y)[0]) < 1e-12


@given(seeds, st.integers(3, 40))
def test_pearson_oracle_and_pvalue(seed, n):
    from scipy import stats as sps
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=n), rng.normal(size=n)
    r, p = stats.pearson(x, y)
    assert r == pytest.approx(oracles.pearson_r(list(x), list(y)), abs=1e-12)
    assert p == pytest.approx(sps.pearsonr(x, y).pvalue, rel=1e-6, abs=1e-12)


def test_pearson_guards():
    with pytest.raises(InputError):
        stats.pearson([1, 2], [1, 2])
    with pytest.raises(ComputationError):
        stats.pearson([1, 1, 1], [1, 2, 3])


@given(seeds, st.integers(6, 60))
def test_partial_matches_residual_oracle(seed, n):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=n)
    x = z + rng.normal(size=n)
    y = 0.5 * z + rng.normal(size=n)
    r, p = stats.partial_correlation(x, y, z)
    assert r == pytest.approx(oracles.residual_partial_r(x, y, z), abs=1e-10)
    assert 0 <= p <= 1


def test_partial_with_orthogonal_control():
    rng = np.random.default_rng(1)
    n = 50
    x, y, z = rng.normal(size=(3, n))
    # make z exactly uncorrelated with x and y
    A = np.column_stack([np.ones(n), x, y])
    z = z - A @ np.linalg.lstsq(A, z, rcond=None)[0]
    assert stats.partial_correlation(x, y, z)[0] == pytest.approx(stats.pearson(x, y)[0], abs=1e-9)


def test_partial_df_is_n_minus_3():
    from scipy import stats as sps
    rng = np.random.default_rng(2)
    x, y, z = rng.normal(size=(3, 20))
    r, p = stats.partial_correlation(x, y, z)
    t = r * math.sqrt(17 / (1 - r * r))
    assert p == pytest.approx(2 * sps.t.sf(abs(t), 17))


def test_partial_degenerate_control():
    x = np.arange(10.0)
    with pytest.raises(ComputationError):
        stats.partial_correlation(x, np.sin(x), x * 2)
    with pytest.raises(InputError):
        stats.partial_correlation([1, 2, 3], [1, 2, 4], [0, 1, 0])


def test_ols_exact_line_and_intercept_only():
    rng = np.random.default_rng(0)
    x = rng.normal(size=30)
    zx = (x - x.mean()) / x.std(ddof=1)
    res = stats.ols_standardized(2 * zx, x[:, None], ["x"])
    assert res.coef("x") == pytest.approx(2.0) and res.r2 == pytest.approx(1.0)
    y = rng.normal(size=30)
    assert stats.ols_standardized(y).coef("const") == pytest.approx(y.mean())


@given(seeds, st.integers(12, 80), st.integers(1, 4))
def test_ols_matches_normal_equations(seed, n, p):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p)) * rng.uniform(0.5, 5, p) + rng.normal(size=p)
    y = X @ rng.normal(size=p) + rng.normal(size=n)
    res = stats.ols_standardized(y, X)
    beta, se, r2 = oracles.ols_normal_equations(y, X)
    np.testing.assert_allclose(res.beta, beta, atol=1e-8)
    np.testing.assert_allclose(res.se, se, atol=1e-8)
    assert res.r2 == pytest.approx(r2, abs=1e-8)


@given(seeds, st.floats(0.1, 100), st.floats(-50, 50))
def test_ols_affine_invariance(seed, scale, shift):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 2))
    y = X @ [1.0, -2.0] + rng.normal(size=40)
    a = stats.ols_standardized(y, X)
    b = stats.ols_standardized(y, X * scale + shift)
    np.testing.assert_allclose(a.beta, b.beta, atol=1e-9)


def test_ols_rank_deficiency():
    x = np.arange(10.0)
    with pytest.raises(ComputationError):
        stats.ols_standardized(x, np.column_stack([x, 2 * x + 1]))
    with pytest.raises(ComputationError):
        stats.ols_standardized(x, np.ones((10, 1)))


# -- strata ------------------------------------------------------------------------

def test_terciles_of_nine():
    vals = {f"u{i}": float(i) for i in range(9)}
    assert [len(m) for _, m in stats.terciles(vals)] == [3, 3, 3]


def test_party_strata():
    s = stats.stratify({"a": 2, "b": 4, "c": 6}, "party_id")
    assert [(x.label, set(x.members)) for x in s] == [("democrat", {"a"}), ("independent", {"b"}), ("republican", {"c"})]


@given(st.lists(st.integers(0, 20), min_size=3, max_size=60))
def test_terciles_partition_and_cut_points(vals):
    values = {f"u{i}": float(v) for i, v in enumerate(vals)}
    strata = stats.stratify(values, "activity")
    members = [s.members for s in strata]
    assert frozenset().union(*members) == frozenset(values)
    assert sum(len(m) for m in members) == len(values)
    q1 = oracles.sorted_quantile(list(values.values()), 1 / 3)
    q2 = oracles.sorted_quantile(list(values.values()), 2 / 3)
    assert all(values[u] <= q1 for u in members[0])
    assert all(q1 < values[u] <= q2 for u in members[1])
    assert all(values[u] > q2 for u in members[2])


def test_stratify_needs_three_users():
    with pytest.raises(InputError):
        stats.stratify({"a": 1.0, "b": 2.0}, "activity")


def test_stratified_delta_q_sem():
    s = [stats.Stratum(stats.StratumKey.ACTIVITY, "low", frozenset({"a"})),
         stats.Stratum(stats.StratumKey.ACTIVITY, "high", frozenset({"b", "c"}))]
    rows = stats.stratified_delta_q(s, {Algorithm.CF: {"a": 1.0, "b": 2.0, "c": 2.0}})
    assert rows[0]["sem"] is None and rows[0]["n_users"] == 1
    assert rows[1]["sem"] == 0 and rows[1]["mean_delta_q"] == 2.0


def test_empty_stratum_errors():
    s = [stats.Stratum(stats.StratumKey.ACTIVITY, "low", frozenset({"z"}))]
    with pytest.raises(ComputationError):
        stats.stratified_delta_q(s, {Algorithm.CF: {"a": 1.0}})


def test_stratified_matches_flat_recompute(small_synth):
    _, _, panel = small_synth
    m = split(panel, "random", 0.7, seed=0)
    table = similarity_table(m)
    rng = np.random.default_rng(0)
    dq = {u: float(rng.normal()) for u in m.users}
    for key in stats.StratumKey:
        values = stats.user_statistics(panel, m, key, table)
        strata = stats.stratify(values, key)
        rows = stats.stratified_delta_q([s for s in strata if s.members], {Algorithm.CFD: dq})
        for row, s in zip(rows, [s for s in strata if s.members]):
            vals = [dq[u] for u in s.members]
            assert row["mean_delta_q"] == pytest.approx(np.mean(vals))
            assert row["n_users"] == len(vals)


def test_slant_statistic_is_unweighted_mean(small_synth):
    _, _, panel = small_synth
    m = split(panel, "random", 0.7, seed=0)
    values = stats.user_statistics(panel, m, "slant")
    u = next(iter(values))
    i = panel.user_index(u)
    row = panel.pageviews[i]
    sl = [panel.slants[panel.domains[j]] for j in row.indices if panel.domains[j] in panel.slants]
    assert values[u] == pytest.approx(np.mean(sl))


def test_slant_strata_need_slants():
    from conftest import make_panel
    panel = make_panel(np.ones((4, 3), dtype=int))
    m = split(panel, "random", 0.5, seed=1)
    with pytest.raises(InputError):
        stats.user_statistics(panel, m, "abs_slant")


# -- domain analyses -------------------------------------------------------------

def test_republican_threshold_excludes_four():
    o = stats.DomainObservation("x", 50, 1, 1, 4.0, 0.0)
    assert not o.republican_audience and not o.democratic_audience


def test_reports_on_synthetic_panel(small_synth):
    _, _, panel = small_synth
    obs = stats.domain_observations(panel, profile_domains(panel), metrics=(Metric.VARIANCE,))
    assert all(panel.scores[o.domain].category.is_news for o in obs)
    corr = stats.correlation_report(obs)
    partial = [r for r in corr if r["analysis"] == "diversity_partial" and r["x"] == "variance_user"]
    assert len(partial) == 1 and partial[0]["control"] == "mean_partisanship"
    x = [o.diversity[(Metric.VARIANCE, Level.USER)] for o in obs]
    want = stats.partial_correlation(x, [o.quality for o in obs], [o.mean_partisanship for o in obs])[0]
    assert partial[0]["r"] == want
    reg = stats.regression_report(obs)
    models = {r["model"] for r in reg}
    assert "variance_user_interaction" in models and "variance_pageview_all" in models


def test_user_and_pageview_pipelines_agree_with_single_views():
    from conftest import make_panel
    rng = np.random.default_rng(5)
    counts = (rng.random((40, 8)) < 0.6).astype(int)
    counts[:, 0] = 1
    panel = make_panel(counts, partisanship=rng.integers(1, 8, 40), scores=rng.uniform(0, 100, 8))
    obs = stats.domain_observations(panel, profile_domains(panel), metrics=tuple(Metric))
    for o in obs:
        for m in Metric:
            assert o.diversity[(m, Level.USER)] == o.diversity[(m, Level.PAGEVIEW)]
