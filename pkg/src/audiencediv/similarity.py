"""User-user similarity on training rating vectors.

Similarities map a correlation coefficient in [-1, 1] to [0, 1] via
``(c + 1) / 2``. Pairs whose coefficient is undefined (a constant vector)
get NaN and never enter a neighborhood.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numba
import numpy as np

from .ingest import RatingsMatrix


class Kernel(str, Enum):
    KENDALL = "kendall"
    PEARSON = "pearson"


NO_SIMILARITY = math.nan


@numba.njit(cache=True)
def _tie_pairs(sorted_x):
    """Number of tied pairs in an already sorted array."""
    n = sorted_x.shape[0]
    total = 0
    run = 1
    for i in range(1, n):
        if sorted_x[i] == sorted_x[i - 1]:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    return total + run * (run - 1) // 2


@numba.njit(cache=True)
def _count_inversions(a):
    """Sort ``a`` in place with a bottom-up merge sort; return strict inversions."""
    n = a.shape[0]
    buf = np.empty_like(a)
    swaps = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    buf[k] = a[j]
                    swaps += mid - i
                    j += 1
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            while i < mid:
                buf[k] = a[i]
                i += 1
                k += 1
            while j < hi:
                buf[k] = a[j]
                j += 1
                k += 1
        a[:n] = buf[:n]
        width *= 2
    return swaps


@numba.njit(cache=True)
def _concordance(x, y):
    """Return (concordant - discordant, ties in x, ties in y) over all pairs.

    Knight's O(n log n) algorithm: sort by (x, y), count joint ties, then count
    the inversions a merge sort of y needs; those are the discordant pairs.
    """
    n = x.shape[0]
    p1 = np.argsort(y, kind="mergesort")
    xs = x[p1]
    ys = y[p1]
    p2 = np.argsort(xs, kind="mergesort")
    xs = xs[p2]
    ys = ys[p2]

    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(xs)
    n3 = 0
    run = 1
    for i in range(1, n):
        if xs[i] == xs[i - 1] and ys[i] == ys[i - 1]:
            run += 1
        else:
            n3 += run * (run - 1) // 2
            run = 1
    n3 += run * (run - 1) // 2

    discordant = _count_inversions(ys)
    n2 = _tie_pairs(ys)
    return n0 - n1 - n2 + n3 - 2 * discordant, n1, n2


@numba.njit(cache=True)
def _tau_b(x, y):
    n = x.shape[0]
    s, n1, n2 = _concordance(x, y)
    n0 = n * (n - 1) // 2
    denom = float(n0 - n1) * float(n0 - n2)
    if denom <= 0.0:
        return np.nan
    return s / math.sqrt(denom)


def kendall_tau_b(x, y) -> float:
    """Tie-corrected Kendall rank correlation in O(n log n); NaN if undefined."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("need two 1-d vectors of equal length >= 2")
    return float(_tau_b(x, y))


def kendall_sim(x, y) -> float:
    return (kendall_tau_b(x, y) + 1.0) / 2.0


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("need two 1-d vectors of equal length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        return NO_SIMILARITY
    return float(np.clip(np.dot(dx, dy) / math.sqrt(sxx * syy), -1.0, 1.0))


def pearson_sim(x, y) -> float:
    return (pearson_r(x, y) + 1.0) / 2.0


# --------------------------------------------------------------------------
# similarity tables

def universe(matrix: RatingsMatrix) -> np.ndarray:
    """Column indices of domains with at least one training visit."""
    return np.flatnonzero(np.diff(matrix.train_counts.tocsc().indptr) > 0)


def user_vector(matrix: RatingsMatrix, user: int | str, columns: np.ndarray | None = None) -> np.ndarray:
    """Dense training ratings of one user; zeros where not visited in training."""
    if isinstance(user, str):
        try:
            user = matrix.users.index(user)
        except ValueError:
            raise KeyError(f"unknown user {user!r}") from None
    if not 0 <= user < matrix.shape[0]:
        raise KeyError(f"unknown user index {user}")
    row = np.asarray(matrix.train[user].todense()).ravel()
    return row if columns is None else row[columns]


@numba.njit(cache=True)
def _full_ties(vals, n):
    """Tied pairs in a length-n vector whose unlisted entries are zero."""
    m = vals.shape[0]
    v = np.sort(vals)
    zeros = n - m
    total = 0
    run = 1
    for i in range(1, m + 1):
        if i < m and v[i] == v[i - 1]:
            run += 1
        else:
            if v[i - 1] == 0.0:
                zeros += run
            else:
                total += run * (run - 1) // 2
            run = 1
    return total + zeros * (zeros - 1) // 2


@numba.njit(cache=True)
def _dense_ranks(vals):
    """Dense ranks of ``vals`` within {0} and the rank given to zero."""
    m = vals.shape[0]
    allv = np.empty(m + 1)
    allv[:m] = vals
    allv[m] = 0.0
    u = np.unique(allv)
    return np.searchsorted(u, vals).astype(np.int64), np.searchsorted(u, 0.0)


@numba.njit(cache=True)
def _inversions_into(a, buf, m):
    """Merge sort ``a[:m]`` in place using ``buf``; return strict inversions."""
    swaps = 0
    width = 1
    while width < m:
        for lo in range(0, m, 2 * width):
            mid = min(lo + width, m)
            hi = min(lo + 2 * width, m)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    buf[k] = a[j]
                    swaps += mid - i
                    j += 1
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            while i < mid:
                buf[k] = a[i]
                i += 1
                k += 1
            while j < hi:
                buf[k] = a[j]
                j += 1
                k += 1
        for q in range(m):
            a[q] = buf[q]
        width *= 2
    return swaps


@numba.njit(cache=True)
def _kendall_table(indptr, indices, data, n):
    """Pairwise tau_b of sparse rows over a universe of ``n`` columns.

    For a pair, only the union T of the two supports needs sorting. The
    remaining ``n - |T|`` columns are (0, 0) pairs: tied with each other, and
    against column i in T they contribute sign(x_i) * sign(y_i) each. Values
    are replaced by per-user dense ranks so (x, y) packs into one int64 key.
    """
    n_users = indptr.shape[0] - 1
    out = np.full((n_users, n_users), np.nan)
    n0 = n * (n - 1) // 2
    ties = np.empty(n_users, dtype=np.int64)
    ranks = np.empty(data.shape[0], dtype=np.int64)
    zero_rank = np.empty(n_users, dtype=np.int64)
    widest = 0
    for u in range(n_users):
        lo, hi = indptr[u], indptr[u + 1]
        ties[u] = _full_ties(data[lo:hi], n)
        r, z = _dense_ranks(data[lo:hi])
        ranks[lo:hi] = r
        zero_rank[u] = z
        widest = max(widest, hi - lo)
    key = np.empty(2 * widest, dtype=np.int64)
    ys = np.empty(2 * widest, dtype=np.int64)
    buf = np.empty(2 * widest, dtype=np.int64)
    mask = (np.int64(1) << 31) - 1
    for a in range(n_users):
        if n0 - ties[a] <= 0:
            continue
        alo, ahi = indptr[a], indptr[a + 1]
        za = zero_rank[a]
        for b in range(a + 1, n_users):
            if n0 - ties[b] <= 0:
                continue
            blo, bhi = indptr[b], indptr[b + 1]
            zb = zero_rank[b]
            i = alo
            j = blo
            t = 0
            cross = 0
            while i < ahi or j < bhi:
                if j >= bhi or (i < ahi and indices[i] < indices[j]):
                    rx = ranks[i]
                    ry = zb
                    i += 1
                elif i >= ahi or indices[j] < indices[i]:
                    rx = za
                    ry = ranks[j]
                    j += 1
                else:
                    rx = ranks[i]
                    ry = ranks[j]
                    i += 1
                    j += 1
                key[t] = (rx << 31) | ry
                if rx != za and ry != zb:
                    cross += 1 if (rx > za) == (ry > zb) else -1
                t += 1
            s = (n - t) * cross
            if t >= 2:
                k = key[:t]
                k.sort()
                n1 = 0
                n3 = 0
                run1 = 1
                run3 = 1
                ys[0] = k[0] & mask
                for q in range(1, t):
                    ys[q] = k[q] & mask
                    if (k[q] >> 31) == (k[q - 1] >> 31):
                        run1 += 1
                    else:
                        n1 += run1 * (run1 - 1) // 2
                        run1 = 1
                    if k[q] == k[q - 1]:
                        run3 += 1
                    else:
                        n3 += run3 * (run3 - 1) // 2
                        run3 = 1
                n1 += run1 * (run1 - 1) // 2
                n3 += run3 * (run3 - 1) // 2
                disc = _inversions_into(ys, buf, t)
                n2 = 0
                run2 = 1
                for q in range(1, t):
                    if ys[q] == ys[q - 1]:
                        run2 += 1
                    else:
                        n2 += run2 * (run2 - 1) // 2
                        run2 = 1
                n2 += run2 * (run2 - 1) // 2
                s += t * (t - 1) // 2 - n1 - n2 + n3 - 2 * disc
            tau = s / math.sqrt(float(n0 - ties[a]) * float(n0 - ties[b]))
            out[a, b] = tau
            out[b, a] = tau
    return out


def _pearson_table(dense: np.ndarray) -> np.ndarray:
    centered = dense - dense.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered**2).sum(axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (centered @ centered.T) / np.outer(norms, norms)
    r[norms == 0, :] = np.nan
    r[:, norms == 0] = np.nan
    return np.clip(r, -1.0, 1.0)


@dataclass(frozen=True, eq=False)
class SimilarityTable:
    kernel: Kernel
    users: tuple[str, ...]
    sims: np.ndarray

    def sim(self, a: int, b: int) -> float:
        return float(self.sims[a, b])

    def rows(self):
        """Yield ``(user_a, user_b, kernel, sim)`` for each defined pair a < b."""
        n = len(self.users)
        for a in range(n):
            for b in range(a + 1, n):
                s = self.sims[a, b]
                if not np.isnan(s):
                    yield self.users[a], self.users[b], self.kernel.value, float(s)


def similarity_table(matrix: RatingsMatrix, kernel: Kernel | str = Kernel.KENDALL) -> SimilarityTable:
    """All pairwise similarities of training vectors (diagonal is NaN)."""
    kernel = Kernel(kernel)
    cols = universe(matrix)
    train = matrix.train.tocsc()[:, cols].tocsr()
    train.sort_indices()
    if kernel is Kernel.KENDALL:
        corr = _kendall_table(
            train.indptr.astype(np.int64),
            train.indices.astype(np.int64),
            train.data.astype(np.float64),
            len(cols),
        )
    else:
        corr = _pearson_table(train.toarray())
    sims = (corr + 1.0) / 2.0
    np.fill_diagonal(sims, np.nan)
    return SimilarityTable(kernel, matrix.users, sims)


def neighbors(
    table: SimilarityTable,
    matrix: RatingsMatrix,
    user: int,
    domain: int,
    n: int = 10,
    raters: np.ndarray | None = None,
) -> list[tuple[int, float]]:
    """The ``n`` most similar users who rated ``domain`` in training.

    Ordered by similarity descending, then by user id ascending (user
    indices follow sorted user ids). ``raters`` may pass the precomputed
    training raters of ``domain``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if raters is None:
        csc = matrix.train_counts.tocsc()
        raters = csc.indices[csc.indptr[domain]:csc.indptr[domain + 1]]
    raters = raters[raters != user]
    s = table.sims[user, raters]
    ok = ~np.isnan(s)
    raters, s = raters[ok], s[ok]
    order = np.lexsort((raters, -s))[:n]
    return [(int(raters[i]), float(s[i])) for i in order]
