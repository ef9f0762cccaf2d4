"""User-based collaborative filtering with an optional diversity re-ranking term."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError
from .ingest import RatingsMatrix
from .similarity import SimilarityTable, neighbors


class Algorithm(str, Enum):
    CF = "cf"
    CFD = "cfd"
    POPULARITY = "popularity"
    ACTUAL = "actual"


@dataclass(frozen=True)
class LogisticParams:
    """Upper asymptote ``a``, inverse growth rate ``psi`` and location ``t``.

    ``t=None`` means "estimate from the data" (mean diversity); call
    :meth:`resolve` before evaluating.
    """

    a: float = 1.0
    psi: float = 1.0
    t: float | None = None

    def __post_init__(self):
        if not self.a > 0 or not self.psi > 0:
            raise InputError("logistic parameters a and psi must be positive")

    def resolve(self, diversity: Mapping[str, float]) -> "LogisticParams":
        if self.t is not None:
            return self
        values = [v for v in diversity.values() if np.isfinite(v)]
        if not values:
            raise InputError("cannot estimate logistic location without diversity values")
        return replace(self, t=float(np.mean(values)))

    def __call__(self, delta):
        if self.t is None:
            raise ValueError("logistic location is unresolved")
        return logistic(delta, self.a, self.psi, self.t)


def logistic(delta, a: float = 1.0, psi: float = 1.0, t: float = 0.0):
    z = -(np.asarray(delta, dtype=float) - t) / psi
    # exp overflow for very negative deltas just sends g to 0
    with np.errstate(over="ignore"):
        g = a / (1.0 + np.exp(z))
    return float(g) if np.ndim(g) == 0 else g


def diversity_terms(domains: Sequence[str], diversity: Mapping[str, float], params: LogisticParams) -> np.ndarray:
    """Re-ranking term per domain; domains without a diversity value get g(t)."""
    delta = np.array([diversity.get(d, np.nan) for d in domains], dtype=float)
    delta = np.where(np.isfinite(delta), delta, params.t)
    return np.asarray(params(delta), dtype=float).reshape(len(domains))


class CFModel:
    """Training-set state shared by every prediction: ratings, means, raters."""

    def __init__(self, matrix: RatingsMatrix, table: SimilarityTable, n: int = 10):
        if n < 1:
            raise InputError("neighborhood size must be >= 1")
        self.matrix = matrix
        self.table = table
        self.n = n
        self._counts = matrix.train_counts.tocsc()
        self._ratings = matrix.train.tocsc()
        if not np.array_equal(self._counts.indptr, self._ratings.indptr):
            raise ValueError("training ratings and counts must share a sparsity pattern")
        train = matrix.train
        visited = np.diff(matrix.train_counts.indptr)
        sums = np.asarray(train.sum(axis=1)).ravel()
        with np.errstate(invalid="ignore", divide="ignore"):
            self.user_means = np.where(visited > 0, sums / visited, np.nan)

    def raters(self, domain: int) -> np.ndarray:
        return self._counts.indices[self._counts.indptr[domain]:self._counts.indptr[domain + 1]]

    def rating(self, user: int, domain: int) -> float:
        lo, hi = self._ratings.indptr[domain], self._ratings.indptr[domain + 1]
        pos = lo + np.searchsorted(self._ratings.indices[lo:hi], user)
        if pos < hi and self._ratings.indices[pos] == user:
            return float(self._ratings.data[pos])
        return 0.0

    def neighbors(self, user: int, domain: int) -> list[tuple[int, float]]:
        return neighbors(self.table, self.matrix, user, domain, self.n, raters=self.raters(domain))

    def predict(self, user: int, domain: int) -> float | None:
        """CF rating prediction, or None when no neighbor rated ``domain``."""
        nbrs = self.neighbors(user, domain)
        if not nbrs:
            return None
        base = self.user_means[user]
        if math.isnan(base):
            return None
        lo, hi = self._ratings.indptr[domain], self._ratings.indptr[domain + 1]
        col_users = self._ratings.indices[lo:hi]
        col_vals = self._ratings.data[lo:hi]
        idx = np.array([u for u, _ in nbrs])
        w = np.array([s for _, s in nbrs])
        v = col_vals[np.searchsorted(col_users, idx)]
        total = w.sum()
        if total == 0:
            return float(base)
        return float(base + np.dot(w, v - self.user_means[idx]) / total)


def predict_cf(model: CFModel, user: int, domain: int) -> float | None:
    return model.predict(user, domain)


def predict_cfd(
    model: CFModel,
    user: int,
    domain: int,
    diversity: Mapping[str, float],
    params: LogisticParams,
) -> float | None:
    base = model.predict(user, domain)
    if base is None:
        return None
    delta = diversity.get(model.matrix.domains[domain], np.nan)
    if not np.isfinite(delta):
        delta = params.t
    return base + params(delta)


@dataclass(frozen=True, eq=False)
class Candidates:
    """One user's evaluable test domains with every per-domain quantity.

    Arrays are aligned and sorted by domain column index, which is also
    domain-name order.
    """

    user: int
    user_id: str
    domains: np.ndarray
    names: tuple[str, ...]
    cf: np.ndarray
    g: np.ndarray
    actual: np.ndarray
    quality: np.ndarray
    popularity: np.ndarray

    def __len__(self):
        return len(self.domains)


def popularity(matrix: RatingsMatrix) -> np.ndarray:
    """Distinct training visitors per domain."""
    return np.diff(matrix.train_counts.tocsc().indptr).astype(float)


def build_candidates(
    model: CFModel,
    quality: np.ndarray,
    g: np.ndarray,
    require_score: bool = True,
) -> list[Candidates]:
    """Candidate sets for every user with a non-empty test set.

    A candidate is a test domain with a neighborhood rating and, when
    ``require_score``, a Green/Red reliability score. Users left with no
    candidates are omitted.
    """
    m = model.matrix
    pop = popularity(m)
    out = []
    for u in range(m.shape[0]):
        doms = m.test_domains(u)
        acts = m.test_ratings(u)
        if require_score:
            keep = np.isfinite(quality[doms])
            doms, acts = doms[keep], acts[keep]
        preds = np.array([np.nan if (p := model.predict(u, d)) is None else p for d in doms], dtype=float)
        keep = np.isfinite(preds)
        if not keep.any():
            continue
        doms, acts, preds = doms[keep], acts[keep], preds[keep]
        out.append(Candidates(
            user=u,
            user_id=m.users[u],
            domains=doms,
            names=tuple(m.domains[d] for d in doms),
            cf=preds,
            g=g[doms],
            actual=acts,
            quality=quality[doms],
            popularity=pop[doms],
        ))
    return out


def rank_order(values: np.ndarray, domains: np.ndarray, secondary: np.ndarray | None = None) -> np.ndarray:
    """Indices sorting by value descending, then ``secondary`` descending,
    then domain ascending."""
    keys = [domains]
    if secondary is not None:
        keys.append(-np.asarray(secondary, dtype=float))
    keys.append(-np.asarray(values, dtype=float))
    return np.lexsort(keys)


@dataclass(frozen=True, eq=False)
class RankedList:
    user: str
    algorithm: Algorithm
    domains: tuple[str, ...]
    ratings: np.ndarray
    quality: np.ndarray

    def __len__(self):
        return len(self.domains)

    def entries(self):
        for r, (d, v) in enumerate(zip(self.domains, self.ratings), start=1):
            yield d, float(v), r


def scores_for(c: Candidates, algorithm: Algorithm | str) -> np.ndarray:
    algorithm = Algorithm(algorithm)
    if algorithm is Algorithm.CF:
        return c.cf
    if algorithm is Algorithm.CFD:
        return c.cf + c.g
    if algorithm is Algorithm.POPULARITY:
        return c.popularity
    return c.actual


def rank_for_user(c: Candidates, algorithm: Algorithm | str) -> RankedList:
    algorithm = Algorithm(algorithm)
    values = scores_for(c, algorithm)
    # a CF+D tie (possibly one created by rounding cf + g) falls back to CF
    order = rank_order(values, c.domains, c.cf if algorithm is Algorithm.CFD else None)
    return RankedList(
        user=c.user_id,
        algorithm=algorithm,
        domains=tuple(c.names[i] for i in order),
        ratings=values[order],
        quality=c.quality[order],
    )


def rank_all(cands: Sequence[Candidates], algorithms: Sequence[Algorithm | str]) -> dict[Algorithm, list[RankedList]]:
    return {Algorithm(a): [rank_for_user(c, a) for c in cands] for a in algorithms}
