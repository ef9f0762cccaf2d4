"""Observational analyses: correlations, standardized regressions, strata."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as sps

from .diversity import MIDPOINT, AudienceProfile, Level, Metric, measure
from .errors import ComputationError, InputError
from .ingest import PanelDataset, RatingsMatrix
from .recommender import Algorithm

_EPS = 1e-12


def _t_pvalue(r: float, df: int) -> float:
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt(df / (1.0 - r * r))
    return float(2.0 * sps.t.sf(abs(t), df))


def pearson(x, y) -> tuple[float, float]:
    """Sample correlation with a two-sided t-test p-value."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise InputError("pearson needs two vectors of equal length")
    if len(x) < 3:
        raise InputError("pearson needs at least 3 observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx <= _EPS * max(1.0, len(x)) or syy <= _EPS * max(1.0, len(y)):
        raise ComputationError("correlation with a constant vector")
    r = float(np.clip(dx @ dy / math.sqrt(sxx * syy), -1.0, 1.0))
    return r, _t_pvalue(r, len(x) - 2)


def partial_correlation(x, y, z) -> tuple[float, float]:
    """Correlation of x and y controlling for z, tested on n - 3 df."""
    x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
    if not len(x) == len(y) == len(z):
        raise InputError("partial correlation needs vectors of equal length")
    if len(x) < 4:
        raise InputError("partial correlation needs at least 4 observations")
    rxy, _ = pearson(x, y)
    rxz, _ = pearson(x, z)
    ryz, _ = pearson(y, z)
    denom = (1 - rxz * rxz) * (1 - ryz * ryz)
    if denom <= _EPS:
        raise ComputationError("control variable is perfectly correlated with x or y")
    r = float(np.clip((rxy - rxz * ryz) / math.sqrt(denom), -1.0, 1.0))
    return r, _t_pvalue(r, len(x) - 3)


@dataclass(frozen=True, eq=False)
class OLSResult:
    terms: tuple[str, ...]
    beta: np.ndarray
    se: np.ndarray
    p: np.ndarray
    r2: float
    n: int

    def coef(self, term: str) -> float:
        return float(self.beta[self.terms.index(term)])

    def rows(self, model: str):
        for t, b, s, p in zip(self.terms, self.beta, self.se, self.p):
            yield {"model": model, "term": t, "beta": float(b), "se": float(s),
                   "p": float(p), "r2": self.r2, "n": self.n}


def ols_standardized(y, X=None, names: Sequence[str] | None = None, standardize: bool = True) -> OLSResult:
    """OLS with an intercept after z-scoring every predictor column.

    ``X`` is an ``n x p`` array (or None for an intercept-only fit). The
    response is left on its own scale, so each slope is the change in y per
    standard deviation of its predictor.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if X is None:
        X = np.empty((n, 0))
    X = np.asarray(X, dtype=float).reshape(n, -1)
    p = X.shape[1]
    names = tuple(names) if names is not None else tuple(f"x{i + 1}" for i in range(p))
    if len(names) != p:
        raise InputError("one name per predictor column")
    if n <= p + 1:
        raise InputError(f"need more observations ({n}) than coefficients ({p + 1})")
    if standardize and p:
        sd = X.std(axis=0, ddof=1)
        if (sd <= 0).any():
            raise ComputationError("rank-deficient design: constant predictor")
        X = (X - X.mean(axis=0)) / sd
    A = np.column_stack([np.ones(n), X])
    q, r = np.linalg.qr(A)
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-10 * diag.max():
        raise ComputationError("rank-deficient design matrix")
    beta = np.linalg.solve(r, q.T @ y)
    resid = y - A @ beta
    df = n - p - 1
    sigma2 = resid @ resid / df
    rinv = np.linalg.inv(r)
    se = np.sqrt(sigma2 * (rinv * rinv).sum(axis=1))
    tss = ((y - y.mean()) ** 2).sum()
    r2 = float(1.0 - resid @ resid / tss) if tss > 0 else float("nan")
    with np.errstate(divide="ignore", invalid="ignore"):
        tval = beta / se
    pval = np.where(se > 0, 2.0 * sps.t.sf(np.abs(tval), df), 0.0)
    return OLSResult(("const",) + names, beta, se, pval, r2, n)


# --------------------------------------------------------------------------
# domain-level observations

@dataclass(frozen=True)
class DomainObservation:
    domain: str
    quality: float
    log_users: float
    log_pageviews: float
    mean_partisanship: float
    extremity: float
    diversity: Mapping[tuple[Metric, Level], float] = field(default_factory=dict)
    slant: float | None = None

    @property
    def republican_audience(self) -> bool:
        return self.mean_partisanship > MIDPOINT

    @property
    def democratic_audience(self) -> bool:
        return self.mean_partisanship < MIDPOINT


def domain_observations(
    panel: PanelDataset,
    profiles: Mapping[str, AudienceProfile],
    metrics: Sequence[Metric | str] = tuple(Metric),
) -> list[DomainObservation]:
    """One observation per news domain carrying a reliability score."""
    out = []
    for d in sorted(profiles):
        rec = panel.scores.get(d)
        if rec is None or not rec.category.is_news:
            continue
        p = profiles[d]
        div = {}
        for m in metrics:
            for lv in Level:
                div[(Metric(m), lv)] = measure(p, m, lv).value
        mean_s = float(p.partisanship.mean())
        out.append(DomainObservation(
            domain=d,
            quality=float(rec.score),
            log_users=math.log(p.n_users),
            log_pageviews=math.log(p.n_pageviews),
            mean_partisanship=mean_s,
            extremity=abs(mean_s - MIDPOINT),
            diversity=div,
            slant=panel.slants.get(d),
        ))
    return out


def _column(obs, key) -> np.ndarray:
    if isinstance(key, tuple):
        return np.array([o.diversity[key] for o in obs])
    return np.array([getattr(o, key) for o in obs], dtype=float)


def _label(key) -> str:
    if isinstance(key, tuple):
        return f"{key[0].value}_{key[1].value}"
    return key


def correlation_report(obs: Sequence[DomainObservation], metrics=(Metric.VARIANCE,)) -> list[dict]:
    """Correlation rows ``analysis,x,y,control,r,p,n`` for the domain analyses."""
    rows = []

    def add(analysis, subset, x, y, control=None):
        if len(subset) < (4 if control else 3):
            return
        xs, ys = _column(subset, x), _column(subset, y)
        try:
            if control is None:
                r, p = pearson(xs, ys)
            else:
                r, p = partial_correlation(xs, ys, _column(subset, control))
        except ComputationError:
            r, p = float("nan"), float("nan")
        rows.append({"analysis": analysis, "x": _label(x), "y": _label(y),
                     "control": "" if control is None else _label(control),
                     "r": r, "p": p, "n": len(subset)})

    groups = {
        "all": list(obs),
        "democratic": [o for o in obs if o.democratic_audience],
        "republican": [o for o in obs if o.republican_audience],
    }
    for g, sub in groups.items():
        for pop in ("log_users", "log_pageviews"):
            add(f"popularity_{g}", sub, pop, "quality")
    add("extremity", groups["all"], "extremity", "quality")
    for m in metrics:
        for lv in Level:
            key = (Metric(m), lv)
            for g, sub in groups.items():
                add(f"diversity_{g}", sub, key, "quality")
            add("diversity_partial", groups["all"], key, "quality", "mean_partisanship")
            for pop in ("log_users", "log_pageviews"):
                add("diversity_popularity", groups["all"], key, pop)
    return rows


def regression_report(obs: Sequence[DomainObservation], metric=Metric.VARIANCE) -> list[dict]:
    """Standardized OLS of reliability on diversity, overall and by audience side,
    plus the model interacting diversity with a Republican-audience dummy."""
    rows = []
    for lv in Level:
        key = (Metric(metric), lv)
        name = _label(key)
        for g, sub in (
            ("all", list(obs)),
            ("republican", [o for o in obs if o.republican_audience]),
            ("democratic", [o for o in obs if o.democratic_audience]),
        ):
            if len(sub) < 3:
                continue
            res = ols_standardized(_column(sub, "quality"), _column(sub, key)[:, None], [name])
            rows.extend(res.rows(f"{name}_{g}"))
        if len(obs) > 5:
            div = _column(obs, key)
            rep = np.array([o.republican_audience for o in obs], dtype=float)
            X = np.column_stack([div, rep, _column(obs, "log_users"), div * rep])
            res = ols_standardized(_column(obs, "quality"), X,
                                   [name, "republican", "log_users", f"{name}_x_republican"])
            rows.extend(res.rows(f"{name}_interaction"))
    return rows


# --------------------------------------------------------------------------
# user strata

class StratumKey(str, Enum):
    SLANT = "slant"
    PARTY_ID = "party_id"
    ABS_SLANT = "abs_slant"
    ACTIVITY = "activity"
    N_DOMAINS = "n_domains"
    NEIGHBOR_SIM = "neighbor_sim"
    BASELINE_TRUST = "baseline_trust"


@dataclass(frozen=True)
class Stratum:
    key: StratumKey
    label: str
    members: frozenset


def terciles(values: Mapping[str, float]) -> list[tuple[str, frozenset]]:
    """Split at the 1/3 and 2/3 empirical quantiles; ties go to the lower stratum."""
    if len(values) < 3:
        raise InputError("tercile split needs at least 3 users")
    v = np.array(list(values.values()), dtype=float)
    q1, q2 = np.quantile(v, [1 / 3, 2 / 3])
    low = frozenset(u for u, x in values.items() if x <= q1)
    mid = frozenset(u for u, x in values.items() if q1 < x <= q2)
    high = frozenset(u for u, x in values.items() if x > q2)
    return [("low", low), ("mid", mid), ("high", high)]


def user_statistics(
    panel: PanelDataset,
    matrix: RatingsMatrix,
    key: StratumKey | str,
    table=None,
    n_neighbors: int = 10,
) -> dict[str, float]:
    """Per-user statistic a stratum key splits on (training data only where it matters)."""
    key = StratumKey(key)
    users = matrix.users
    if key is StratumKey.PARTY_ID:
        return {u: float(panel.partisanship[i]) for i, u in enumerate(users)}
    train = matrix.train_counts
    if key in (StratumKey.SLANT, StratumKey.ABS_SLANT):
        if not panel.slants:
            raise InputError(f"stratum {key.value!r} needs domain slants")
        visited = panel.pageviews
        slant = panel.slant_vector()
        out = {}
        for i, u in enumerate(users):
            cols = visited.indices[visited.indptr[i]:visited.indptr[i + 1]]
            s = slant[cols]
            s = s[np.isfinite(s)]
            if s.size:
                m = float(s.mean())
                out[u] = abs(m) if key is StratumKey.ABS_SLANT else m
        return out
    if key is StratumKey.ACTIVITY:
        sums = np.asarray(matrix.train.sum(axis=1)).ravel()
        return {u: float(sums[i]) for i, u in enumerate(users)}
    if key is StratumKey.N_DOMAINS:
        n = np.diff(train.indptr)
        return {u: float(n[i]) for i, u in enumerate(users)}
    if key is StratumKey.NEIGHBOR_SIM:
        if table is None:
            raise InputError("neighbor-similarity strata need a similarity table")
        out = {}
        for i, u in enumerate(users):
            s = table.sims[i]
            s = s[np.isfinite(s)]
            if s.size:
                out[u] = float(np.sort(s)[::-1][:n_neighbors].mean())
        return out
    # baseline trust: mean reliability of scored news domains in the training set
    q = panel.quality()
    out = {}
    for i, u in enumerate(users):
        cols = train.indices[train.indptr[i]:train.indptr[i + 1]]
        vals = q[cols]
        vals = vals[np.isfinite(vals)]
        if vals.size:
            out[u] = float(vals.mean())
    return out


def stratify(values: Mapping[str, float], key: StratumKey | str) -> list[Stratum]:
    key = StratumKey(key)
    if len(values) < 3:
        raise InputError("stratification needs at least 3 users")
    if key is StratumKey.PARTY_ID:
        groups = [
            ("democrat", frozenset(u for u, v in values.items() if v <= 3)),
            ("independent", frozenset(u for u, v in values.items() if v == 4)),
            ("republican", frozenset(u for u, v in values.items() if v >= 5)),
        ]
    else:
        groups = terciles(values)
    return [Stratum(key, label, members) for label, members in groups]


def stratified_delta_q(
    strata: Sequence[Stratum],
    delta_qs: Mapping[Algorithm, Mapping[str, float]],
) -> list[dict]:
    """Mean and standard error of delta Q per stratum and algorithm."""
    rows = []
    for s in strata:
        for alg, by_user in delta_qs.items():
            vals = np.array([by_user[u] for u in sorted(s.members) if u in by_user], dtype=float)
            if vals.size == 0:
                raise ComputationError(f"empty stratum {s.key.value}/{s.label}")
            sem = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else None
            rows.append({"key": s.key.value, "stratum": s.label, "algorithm": Algorithm(alg).value,
                         "mean_delta_q": float(vals.mean()), "sem": sem, "n_users": int(vals.size)})
    return rows
