"""Offline evaluation of ranked lists.

Trustworthiness uses the reliability score of the listed domains, accuracy
compares a recommendation list with the same user's actual-visits list, and
the rank-discounted change in trustworthiness summarizes a whole list.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import ComputationError, InputError
from .ingest import TRUST_THRESHOLD
from .recommender import Algorithm, Candidates, RankedList

METRIC_NAMES = ("trust_mean", "trust_binary", "precision", "rmse")


def _top(lst: RankedList, k: int) -> int:
    if len(lst) == 0:
        raise InputError("empty ranked list")
    if np.isnan(lst.quality[: min(k, len(lst))]).any():
        raise ComputationError(f"unscored domain in the list of user {lst.user!r}")
    return min(k, len(lst))


def trust_mean(lst: RankedList, k: int) -> float:
    """Mean reliability score of the top ``k`` entries (k clipped to length)."""
    k = _top(lst, k)
    return float(lst.quality[:k].mean())


def trust_binary(lst: RankedList, k: int) -> float:
    """Share of the top ``k`` entries scoring at least 60."""
    k = _top(lst, k)
    return float((lst.quality[:k] >= TRUST_THRESHOLD).mean())


def _check_pair(pred: RankedList, actual: RankedList, k: int):
    if set(pred.domains) != set(actual.domains):
        raise InputError(f"ranked lists of user {pred.user!r} cover different candidates")
    if not 0 < k <= len(pred):
        raise InputError(f"k={k} outside 1..{len(pred)}")


def precision_at_k(pred: RankedList, actual: RankedList, k: int) -> float:
    _check_pair(pred, actual, k)
    return len(set(pred.domains[:k]) & set(actual.domains[:k])) / k


def rmse_at_k(pred: RankedList, actual: RankedList, k: int) -> float:
    """Rank-aligned RMSE: the r-th predicted rating against the r-th actual one."""
    _check_pair(pred, actual, k)
    d = pred.ratings[:k] - actual.ratings[:k]
    return float(np.sqrt(np.mean(d * d)))


def mean_se(values) -> tuple[float, float]:
    """Mean and standard error of the mean (NaN error for fewer than 2 values)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return np.nan, np.nan
    if v.size == 1:
        return float(v[0]), np.nan
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


@dataclass(frozen=True)
class PerKBin:
    algorithm: Algorithm
    k: int
    n_users: int
    stats: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    below_min: bool = False

    def row(self) -> dict:
        out = {"algorithm": self.algorithm.value, "k": self.k, "n_users": self.n_users}
        for name in METRIC_NAMES:
            m, se = self.stats.get(name, (np.nan, np.nan))
            out[name] = m
            out[f"{name}_se"] = se
        return out


def per_user_metric(lst: RankedList, actual: RankedList, name: str, k: int) -> float:
    if name == "trust_mean":
        return trust_mean(lst, k)
    if name == "trust_binary":
        return trust_binary(lst, k)
    if name == "precision":
        return precision_at_k(lst, actual, k)
    if name == "rmse":
        if lst.algorithm is Algorithm.POPULARITY:
            return np.nan
        return rmse_at_k(lst, actual, k)
    raise ValueError(f"unknown metric {name!r}")


def bin_over_users(
    lists: Mapping[Algorithm, Sequence[RankedList]],
    actual: Sequence[RankedList],
    k_max: int | None = None,
    min_bin_users: int = 100,
    cap: bool = True,
    metrics: Sequence[str] = METRIC_NAMES,
) -> list[PerKBin]:
    """Mean and standard error of each metric at every list length k.

    A user enters bin k when their list has at least k entries. With ``cap``
    bins holding fewer than ``min_bin_users`` users are dropped; otherwise
    they are kept and flagged.
    """
    by_user = {a.user: a for a in actual}
    longest = max((len(a) for a in actual), default=0)
    k_max = longest if k_max is None else min(k_max, longest)
    out = []
    for alg, lsts in lists.items():
        for k in range(1, k_max + 1):
            members = [l for l in lsts if len(l) >= k]
            small = len(members) < min_bin_users
            if cap and small:
                continue
            summary = {}
            for name in metrics:
                vals = [per_user_metric(l, by_user[l.user], name, k) for l in members]
                vals = [v for v in vals if not np.isnan(v)]
                summary[name] = mean_se(vals)
            out.append(PerKBin(Algorithm(alg), k, len(members), summary, small))
    return out


# --------------------------------------------------------------------------
# rank-discounted trustworthiness

_EXACT_DISCOUNT_K = 2048


def discount_distribution(k: int, alpha: float = 1.0) -> np.ndarray:
    """Selection probability of ranks 1..k decaying as rank**-alpha."""
    if k < 1 or alpha < 0:
        raise ValueError("need k >= 1 and alpha >= 0")
    if float(alpha).is_integer() and k <= _EXACT_DISCOUNT_K:
        # exact rationals, so every probability is correctly rounded
        a = int(alpha)
        total = sum(Fraction(1, r**a) for r in range(1, k + 1))
        return np.array([float(total.denominator / (r**a * total.numerator)) for r in range(1, k + 1)])
    w = np.arange(1, k + 1, dtype=float) ** -alpha
    return w / math.fsum(w)


@dataclass(frozen=True)
class DeltaQResult:
    user: str
    algorithm: Algorithm
    delta_q: float
    k: int
    alpha: float


def delta_q(rec: RankedList, baseline: RankedList, alpha: float = 1.0) -> DeltaQResult:
    """Expected reliability change from the baseline list to ``rec``."""
    k = min(len(rec), len(baseline))
    if k == 0:
        raise InputError("delta Q of an empty list")
    p = discount_distribution(k, alpha)
    dq = float(np.dot(p, rec.quality[:k] - baseline.quality[:k]))
    return DeltaQResult(rec.user, rec.algorithm, dq, k, alpha)


# --------------------------------------------------------------------------
# resampling null for the precision of the re-ranked list

@dataclass(frozen=True, eq=False)
class NullResult:
    k: int
    observed: float
    replicates: np.ndarray
    p_value: float
    p_raw: float
    n_users: int

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "n_users": self.n_users,
            "observed_precision": self.observed,
            "replicates": [float(x) for x in self.replicates],
            "p_value": self.p_value,
            "p_raw": self.p_raw,
        }


def _groups(cands: Sequence[Candidates], k: int):
    """Stack users by candidate count so each group is a dense matrix."""
    by_len: dict[int, list[Candidates]] = {}
    for c in cands:
        by_len.setdefault(len(c), []).append(c)
    out = []
    for m in sorted(by_len):
        grp = by_len[m]
        cf = np.array([c.cf for c in grp], dtype=float)
        g = np.array([c.g for c in grp], dtype=float)
        hit = np.zeros((len(grp), m), dtype=bool)
        for i, c in enumerate(grp):
            hit[i, np.lexsort((c.domains, -c.actual))[:k]] = True
        out.append((cf, g, hit))
    return out


def _hits(score: np.ndarray, cf: np.ndarray, hit: np.ndarray, k: int) -> int:
    # same order as the CF+D list: score, then CF rating, then column (= domain)
    if k == 1:
        tied = score == score.max(axis=1, keepdims=True)
        best = np.argmax(np.where(tied, cf, -np.inf), axis=1)
        return int(hit[np.arange(len(hit)), best].sum())
    top = np.lexsort((-cf, -score), axis=-1)[:, :k]
    return int(np.take_along_axis(hit, top, axis=1).sum())


def resampling_null(
    cands: Sequence[Candidates],
    k: int,
    replicates: int = 1000,
    seed: int = 0,
) -> NullResult:
    """Precision of CF+D against re-rankings with shuffled diversity terms.

    Each replicate permutes the diversity terms among every user's candidate
    domains independently, re-ranks by CF rating plus shuffled term, and
    averages precision at ``k`` over users with at least ``k`` candidates.
    Replicate ``b`` draws from a generator seeded with ``(seed, b)``.
    """
    if k < 1 or replicates < 1:
        raise InputError("need k >= 1 and replicates >= 1")
    if all(len(c) < 2 for c in cands):
        raise InputError("resampling needs a user with at least 2 candidates")
    pool = [c for c in cands if len(c) >= k]
    if not pool:
        raise InputError(f"no user has {k} candidates")
    groups = _groups(pool, k)
    scale = 1.0 / (k * len(pool))
    observed = sum(_hits(cf + g, cf, hit, k) for cf, g, hit in groups) * scale
    reps = np.empty(replicates)
    for b in range(replicates):
        rng = np.random.default_rng([seed, b])
        reps[b] = sum(_hits(cf + rng.permuted(g, axis=1), cf, hit, k) for cf, g, hit in groups) * scale
    ge = int((reps >= observed).sum())
    return NullResult(
        k=k,
        observed=observed,
        replicates=reps,
        p_value=(1 + ge) / (1 + replicates),
        p_raw=ge / replicates,
        n_users=len(pool),
    )


# --------------------------------------------------------------------------
# partisan fairness of the re-ranking

def welch_t(a, b) -> tuple[float, float]:
    """Two-sided unequal-variance t test; NaNs when it is undefined."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        return np.nan, np.nan
    res = stats.ttest_ind(a, b, equal_var=False)
    return float(res.statistic), float(res.pvalue)


def false_positive_rates(
    cf_lists: Sequence[RankedList],
    cfd_lists: Sequence[RankedList],
    slants: Mapping[str, float],
    k_max: int = 28,
) -> list[dict]:
    """Rate at which trustworthy domains in CF's top k are missing from CF+D's.

    Computed per user separately for left (slant < 0) and right (slant > 0)
    domains, averaged over users with at least k candidates; users with no
    trustworthy same-side domain in CF's top k are left out at that k. At
    every k the two sides are compared with a Welch test, Bonferroni
    corrected for ``k_max`` tests.
    """
    if not slants:
        raise InputError("false-positive analysis needs domain slants")
    cfd_by_user = {l.user: l for l in cfd_lists}
    rows = []
    for k in range(1, k_max + 1):
        rates = {"left": [], "right": []}
        for cf in cf_lists:
            if len(cf) < k:
                continue
            cfd_top = set(cfd_by_user[cf.user].domains[:k])
            for side in rates:
                base = [
                    d for d, q in zip(cf.domains[:k], cf.quality[:k])
                    if q >= TRUST_THRESHOLD and _side(slants.get(d)) == side
                ]
                if base:
                    rates[side].append(sum(d not in cfd_top for d in base) / len(base))
        t, p = welch_t(rates["left"], rates["right"])
        p_bonf = min(1.0, p * k_max) if np.isfinite(p) else np.nan
        for side in ("left", "right"):
            m, se = mean_se(rates[side])
            rows.append({
                "k": k, "side": side, "rate_mean": m, "rate_se": se,
                "n_users": len(rates[side]), "welch_t": t, "p_raw": p, "p_bonferroni": p_bonf,
            })
    return rows


def _side(slant) -> str | None:
    if slant is None or not np.isfinite(slant) or slant == 0:
        return None
    return "left" if slant < 0 else "right"
