"""Nemenman-Shafee-Bialek posterior-mean entropy for a fixed number of bins.

The NSB prior is a mixture of symmetric Dirichlet priors whose mixing density
makes the prior expected entropy ``xi(beta)`` uniform on ``(0, log K)``. The
estimate is therefore

    S = int dxi rho(beta(xi)) <S | n, beta> / int dxi rho(beta(xi))

with ``rho`` the Dirichlet-multinomial evidence. We integrate over ``xi``
with Gauss-Legendre rules, zooming onto the region that carries posterior
mass and doubling the node count until successive estimates agree.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import digamma, gammaln, polygamma

from .errors import ComputationError

_MAX_NODES = 6400


def prior_entropy(beta, k: int) -> np.ndarray:
    """Expected entropy under a symmetric Dirichlet(beta) prior on ``k`` bins."""
    beta = np.asarray(beta, dtype=float)
    return digamma(k * beta + 1.0) - digamma(beta + 1.0)


def prior_entropy_slope(beta, k: int) -> np.ndarray:
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    out = k * polygamma(1, k * beta + 1.0) - polygamma(1, beta + 1.0)
    big = beta > 1e3
    if big.any():
        # asymptotic series; the direct difference cancels catastrophically
        b = beta[big]
        out[big] = (
            (1 - 1 / k) / (2 * b**2)
            - (1 - 1 / k**2) / (6 * b**3)
            + (1 - 1 / k**4) / (30 * b**5)
        )
    return out


@lru_cache(maxsize=None)
def _inverse_table(k: int):
    logb = np.linspace(-40.0, 40.0, 16001)
    beta = np.exp(logb)
    return prior_entropy(beta, k), logb, prior_entropy_slope(beta, k) * beta


def beta_of_xi(xi, k: int) -> np.ndarray:
    """Invert ``xi(beta)``: table lookup followed by Newton steps in log beta.

    The Newton slope is interpolated from the table, which is accurate enough
    for the already-close starting point and avoids trigamma evaluations.
    """
    xi = np.asarray(xi, dtype=float)
    table_xi, table_logb, table_slope = _inverse_table(k)
    u = np.interp(xi, table_xi, table_logb)
    slope = np.interp(u, table_logb, table_slope)
    for _ in range(3):
        u = u - (prior_entropy(np.exp(u), k) - xi) / slope
    return np.exp(u)


@lru_cache(maxsize=None)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def _log_evidence(beta: np.ndarray, counts: np.ndarray, k: int) -> np.ndarray:
    n_total = counts.sum()
    vals, mult = np.unique(counts[counts > 0], return_counts=True)
    b = beta[:, None]
    kb = k * beta
    # empty bins contribute gammaln(beta) - gammaln(beta) = 0 and are skipped
    return (
        gammaln(kb) - gammaln(n_total + kb)
        + ((gammaln(vals[None, :] + b) - gammaln(b)) @ mult)
    )


def _conditional_entropy(beta: np.ndarray, counts: np.ndarray, k: int) -> np.ndarray:
    n_total = counts.sum()
    kb = k * beta
    vals, mult = np.unique(counts, return_counts=True)
    a = vals[None, :] + beta[:, None]
    return digamma(n_total + kb + 1.0) - ((a * digamma(a + 1.0)) @ mult) / (n_total + kb)


@lru_cache(maxsize=None)
def _full_rule(n: int, k: int):
    x, _ = _gauss_legendre(n)
    xi = 0.5 * np.log(k) * (x + 1.0)
    return xi, beta_of_xi(xi, k)


@lru_cache(maxsize=4096)
def _zoomed_rule(lo: float, hi: float, n: int, k: int):
    # lo and hi are always nodes of the full rule, so the cache stays small
    x, w = _gauss_legendre(n)
    xi = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    return 0.5 * (hi - lo) * w, beta_of_xi(xi, k)


def _estimate(lo, hi, n, counts, k):
    w, beta = _zoomed_rule(lo, hi, n, k)
    logrho = _log_evidence(beta, counts, k)
    weights = w * np.exp(logrho - logrho.max())
    return float(np.dot(weights, _conditional_entropy(beta, counts, k)) / weights.sum())


def nsb_entropy(counts, k: int | None = None, rtol: float = 1e-6, nodes: int = 200) -> float:
    """NSB estimate of the entropy (natural log) of a histogram.

    ``counts`` may be real-valued (pageview-weighted bins). ``k`` defaults to
    the histogram length, zero bins included.
    """
    counts = np.asarray(counts, dtype=float)
    k = len(counts) if k is None else k
    if counts.sum() <= 0:
        raise ComputationError("NSB entropy of an empty histogram")

    hi_xi = float(np.log(k))
    xi, beta = _full_rule(nodes, k)
    logrho = _log_evidence(beta, counts, k)
    live = np.flatnonzero(logrho > logrho.max() - 50.0)
    lo = 0.0 if live[0] == 0 else float(xi[live[0] - 1])
    hi = hi_xi if live[-1] == len(xi) - 1 else float(xi[live[-1] + 1])

    n = nodes
    prev = _estimate(lo, hi, n, counts, k)
    residual = np.inf
    while n < _MAX_NODES:
        n *= 2
        cur = _estimate(lo, hi, n, counts, k)
        residual = abs(cur - prev)
        if residual <= rtol * max(abs(cur), 1e-12):
            return cur
        prev = cur
    raise ComputationError(f"NSB quadrature did not converge (residual {residual:.3g})")
