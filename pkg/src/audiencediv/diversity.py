"""Audience partisan diversity of a domain.

Every metric works on the 7-bin histogram of visitor partisanship, either
counting each visitor once (user level) or weighting each visitor by their
pageviews to the domain (pageview level).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from .errors import ComputationError
from .ingest import PARTISANSHIP_LEVELS, PanelDataset, RatingsMatrix
from .nsb import nsb_entropy

SCALE = np.arange(1, PARTISANSHIP_LEVELS + 1, dtype=float)
MIDPOINT = 4.0


class Metric(str, Enum):
    VARIANCE = "variance"
    ENTROPY_ML = "entropy_ml"
    ENTROPY_DIRICHLET = "entropy_dirichlet"
    ENTROPY_NSB = "entropy_nsb"
    COMP_MAX_PROB = "comp_max_prob"
    COMP_GINI = "comp_gini"


class Level(str, Enum):
    USER = "user"
    PAGEVIEW = "pageview"


@dataclass(frozen=True, eq=False)
class AudienceProfile:
    """Visitors of one domain: their partisanship and pageviews."""

    domain: str
    partisanship: np.ndarray
    pageviews: np.ndarray

    @classmethod
    def from_visitors(cls, domain, partisanship, pageviews=None) -> "AudienceProfile":
        s = np.asarray(partisanship, dtype=np.int64)
        w = np.ones(len(s)) if pageviews is None else np.asarray(pageviews, dtype=float)
        return cls(domain, s, w)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.partisanship - 1, minlength=PARTISANSHIP_LEVELS)

    @property
    def weighted_counts(self) -> np.ndarray:
        return np.bincount(self.partisanship - 1, weights=self.pageviews, minlength=PARTISANSHIP_LEVELS)

    @property
    def n_users(self) -> int:
        return len(self.partisanship)

    @property
    def n_pageviews(self) -> float:
        return float(self.pageviews.sum())

    def histogram(self, level: Level | str) -> np.ndarray:
        if Level(level) is Level.USER:
            h = self.counts.astype(float)
        else:
            h = self.weighted_counts
        if h.sum() <= 0:
            raise ComputationError(f"empty audience profile for {self.domain!r}")
        return h


@dataclass(frozen=True)
class DiversityValue:
    metric: Metric
    level: Level
    value: float
    mean_partisanship: float
    extremity: float


def _mean(hist: np.ndarray) -> float:
    return float(np.dot(hist, SCALE) / hist.sum())


def _wrap(metric, level, hist, value) -> DiversityValue:
    m = _mean(hist)
    return DiversityValue(Metric(metric), Level(level), float(value), m, abs(m - MIDPOINT))


def _plugin_entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


# Histogram-level metrics. A user-level histogram holds integer counts N_j,
# a pageview-level one the pageview mass W_j; the formulas are shared.

def variance_of(hist) -> float:
    """Population variance of partisanship for a 7-bin histogram."""
    hist = np.asarray(hist, dtype=float)
    m = _mean(hist)
    return float(np.dot(hist, (SCALE - m) ** 2) / hist.sum())


def entropy_ml_of(hist) -> float:
    hist = np.asarray(hist, dtype=float)
    return _plugin_entropy(hist / hist.sum())


def entropy_dirichlet_of(hist, alpha: float = 1.0) -> float:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    hist = np.asarray(hist, dtype=float)
    k = len(hist)
    return _plugin_entropy((hist + alpha) / (hist.sum() + k * alpha))


def comp_max_prob_of(hist) -> float:
    hist = np.asarray(hist, dtype=float)
    return float(1.0 - hist.max() / hist.sum())


def gini(x) -> float:
    """Gini coefficient as the mean absolute difference over all ordered pairs."""
    x = np.asarray(x, dtype=float)
    total = x.sum()
    if total <= 0:
        raise ComputationError("Gini coefficient of an all-zero vector")
    return float(np.abs(x[:, None] - x[None, :]).sum() / (2 * len(x) * total))


def comp_gini_of(hist) -> float:
    return 1.0 - gini(hist)


def variance(profile: AudienceProfile, level: Level | str = Level.USER) -> DiversityValue:
    h = profile.histogram(level)
    return _wrap(Metric.VARIANCE, level, h, variance_of(h))


def entropy_ml(profile: AudienceProfile, level: Level | str = Level.USER) -> DiversityValue:
    h = profile.histogram(level)
    return _wrap(Metric.ENTROPY_ML, level, h, entropy_ml_of(h))


def entropy_dirichlet(profile: AudienceProfile, level: Level | str = Level.USER, alpha: float = 1.0) -> DiversityValue:
    h = profile.histogram(level)
    return _wrap(Metric.ENTROPY_DIRICHLET, level, h, entropy_dirichlet_of(h, alpha))


def entropy_nsb(profile: AudienceProfile, level: Level | str = Level.USER) -> DiversityValue:
    h = profile.histogram(level)
    return _wrap(Metric.ENTROPY_NSB, level, h, nsb_entropy(h))


def comp_max_prob(profile: AudienceProfile, level: Level | str = Level.USER) -> DiversityValue:
    h = profile.histogram(level)
    return _wrap(Metric.COMP_MAX_PROB, level, h, comp_max_prob_of(h))


def comp_gini(profile: AudienceProfile, level: Level | str = Level.USER) -> DiversityValue:
    h = profile.histogram(level)
    return _wrap(Metric.COMP_GINI, level, h, comp_gini_of(h))


METRICS = {
    Metric.VARIANCE: variance,
    Metric.ENTROPY_ML: entropy_ml,
    Metric.ENTROPY_DIRICHLET: entropy_dirichlet,
    Metric.ENTROPY_NSB: entropy_nsb,
    Metric.COMP_MAX_PROB: comp_max_prob,
    Metric.COMP_GINI: comp_gini,
}


def measure(profile: AudienceProfile, metric: Metric | str, level: Level | str = Level.USER) -> DiversityValue:
    return METRICS[Metric(metric)](profile, level)


def profile_domains(
    panel: PanelDataset,
    matrix: RatingsMatrix | None = None,
    restrict_to_train: bool = True,
) -> dict[str, AudienceProfile]:
    """One audience profile per domain with at least one counted visit.

    With a ratings matrix and ``restrict_to_train`` only its training
    pageviews count; otherwise the whole panel does.
    """
    if matrix is not None and restrict_to_train:
        counts = matrix.train_counts.tocsc()
    else:
        counts = panel.pageviews.tocsc()
    out = {}
    for j, d in enumerate(panel.domains):
        lo, hi = counts.indptr[j], counts.indptr[j + 1]
        if hi == lo:
            continue
        rows = counts.indices[lo:hi]
        out[d] = AudienceProfile(d, panel.partisanship[rows], counts.data[lo:hi].astype(float))
    return out


def diversity_map(
    profiles: Mapping[str, AudienceProfile],
    metric: Metric | str = Metric.VARIANCE,
    level: Level | str = Level.USER,
) -> dict[str, float]:
    return {d: measure(p, metric, level).value for d, p in profiles.items()}


def diversity_rows(profiles: Mapping[str, AudienceProfile]):
    """Every metric at both levels, as rows for the diversity report."""
    for d in sorted(profiles):
        p = profiles[d]
        for level in Level:
            for metric in Metric:
                v = measure(p, metric, level)
                yield {
                    "domain": d,
                    "metric": metric.value,
                    "level": level.value,
                    "value": v.value,
                    "mean_partisanship": v.mean_partisanship,
                    "extremity": v.extremity,
                    "n_users": p.n_users,
                    "n_pageviews": p.n_pageviews,
                }
