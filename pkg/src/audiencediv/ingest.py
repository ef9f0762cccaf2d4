"""Loading of traffic, survey, reliability and slant files into a panel.

The panel is the pooled, filtered view of the raw web-traffic waves; the
ratings matrix is the TF-IDF transform of its pageview counts together with
a train/test partition of every user's visited domains.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InputError

log = logging.getLogger(__name__)

TRUST_THRESHOLD = 60.0
PARTISANSHIP_LEVELS = 7


class Category(str, Enum):
    GREEN = "green"
    RED = "red"
    SATIRE = "satire"
    PLATFORM = "platform"

    @property
    def is_news(self) -> bool:
        return self in (Category.GREEN, Category.RED)


@dataclass(frozen=True)
class TrafficRecord:
    user_id: str
    domain: str
    timestamp: float | None
    pageviews: int


@dataclass(frozen=True)
class SurveyRecord:
    user_id: str
    partisanship: int


@dataclass(frozen=True)
class ScoreRecord:
    domain: str
    score: float
    category: Category


def normalize_domain(raw: str) -> str:
    """Lowercase a hostname and drop scheme, path, port and a leading ``www.``."""
    d = raw.strip().lower()
    if "://" in d:
        d = d.split("://", 1)[1]
    d = d.split("/", 1)[0].split(":", 1)[0]
    if d.startswith("www."):
        d = d[4:]
    if not d or any(c.isspace() for c in d):
        raise ValueError(f"invalid domain {raw!r}")
    return d


def parse_timestamp(raw: str) -> float | None:
    raw = raw.strip()
    if not raw:
        return None
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    ts = datetime.fromisoformat(raw)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.timestamp()


def format_timestamp(seconds: float) -> str:
    return datetime.fromtimestamp(seconds, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _rows(path: Path, header: Sequence[str]):
    """Yield ``(line_number, row_dict)`` for a CSV file with a required header."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        cols = [c.strip().lower() for c in first]
        missing = [h for h in header if h not in cols]
        if missing:
            raise InputError(f"{path}:1: missing columns {missing}")
        idx = [cols.index(h) for h in header]
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(cols):
                raise InputError(f"{path}:{reader.line_num}: expected {len(cols)} fields, got {len(row)}")
            yield reader.line_num, {h: row[i] for h, i in zip(header, idx)}


def read_traffic(path) -> list[TrafficRecord]:
    out = []
    for line, row in _rows(path, ("user_id", "domain", "timestamp", "pageviews")):
        try:
            pv = int(row["pageviews"])
            if pv < 1:
                raise ValueError("pageviews must be >= 1")
            rec = TrafficRecord(
                user_id=row["user_id"].strip(),
                domain=normalize_domain(row["domain"]),
                timestamp=parse_timestamp(row["timestamp"]),
                pageviews=pv,
            )
            if not rec.user_id:
                raise ValueError("empty user_id")
        except ValueError as exc:
            raise InputError(f"{path}:{line}: {exc}") from None
        out.append(rec)
    return out


def read_survey(path) -> dict[str, int]:
    survey: dict[str, int] = {}
    for line, row in _rows(path, ("user_id", "partisanship")):
        uid = row["user_id"].strip()
        try:
            s = int(row["partisanship"])
        except ValueError:
            raise InputError(f"{path}:{line}: partisanship is not an integer") from None
        if not 1 <= s <= PARTISANSHIP_LEVELS:
            raise InputError(f"{path}:{line}: partisanship {s} outside 1..7")
        if uid in survey and survey[uid] != s:
            raise InputError(f"{path}:{line}: user {uid!r} has conflicting partisanship values")
        survey[uid] = s
    return survey


def read_scores(path) -> dict[str, ScoreRecord]:
    scores: dict[str, ScoreRecord] = {}
    for line, row in _rows(path, ("domain", "score", "category")):
        try:
            domain = normalize_domain(row["domain"])
            score = float(row["score"])
            category = Category(row["category"].strip().lower())
        except ValueError as exc:
            raise InputError(f"{path}:{line}: {exc}") from None
        if not 0.0 <= score <= 100.0 or math.isnan(score):
            raise InputError(f"{path}:{line}: score {score} outside [0, 100]")
        if category is Category.GREEN and score < TRUST_THRESHOLD:
            raise InputError(f"{path}:{line}: green domain with score {score} < 60")
        if category is Category.RED and score >= TRUST_THRESHOLD:
            raise InputError(f"{path}:{line}: red domain with score {score} >= 60")
        scores[domain] = ScoreRecord(domain, score, category)
    return scores


def read_slants(path) -> dict[str, float]:
    slants: dict[str, float] = {}
    for line, row in _rows(path, ("domain", "slant")):
        try:
            domain = normalize_domain(row["domain"])
            s = float(row["slant"])
        except ValueError as exc:
            raise InputError(f"{path}:{line}: {exc}") from None
        if not -2.0 <= s <= 2.0:
            raise InputError(f"{path}:{line}: slant {s} outside [-2, 2]")
        slants[domain] = s
    return slants


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Pooled traffic for users with a survey answer and domains above threshold.

    ``pageviews`` is a users x domains CSR matrix of summed counts. The event
    arrays keep the per-record timestamps needed for a longitudinal split
    (``event_time`` is NaN where the source row had no timestamp).
    """

    users: tuple[str, ...]
    partisanship: np.ndarray
    domains: tuple[str, ...]
    pageviews: sp.csr_matrix
    event_user: np.ndarray
    event_domain: np.ndarray
    event_time: np.ndarray
    event_pageviews: np.ndarray
    scores: Mapping[str, ScoreRecord] = field(default_factory=dict)
    slants: Mapping[str, float] = field(default_factory=dict)
    min_visitors: int = 30
    dropped_users: int = 0

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_domains(self) -> int:
        return len(self.domains)

    def user_index(self, user_id: str) -> int:
        return self._uidx[user_id]

    def domain_index(self, domain: str) -> int:
        return self._didx[domain]

    def __post_init__(self):
        object.__setattr__(self, "_uidx", {u: i for i, u in enumerate(self.users)})
        object.__setattr__(self, "_didx", {d: j for j, d in enumerate(self.domains)})

    def quality(self) -> np.ndarray:
        """Reliability score per domain column; NaN unless Green or Red."""
        q = np.full(self.n_domains, np.nan)
        for j, d in enumerate(self.domains):
            rec = self.scores.get(d)
            if rec is not None and rec.category.is_news:
                q[j] = rec.score
        return q

    def slant_vector(self) -> np.ndarray:
        return np.array([self.slants.get(d, np.nan) for d in self.domains], dtype=float)

    def has_timestamps(self) -> bool:
        return self.event_time.size > 0 and not np.isnan(self.event_time).any()

    def __eq__(self, other):
        if not isinstance(other, PanelDataset):
            return NotImplemented
        return (
            self.users == other.users
            and self.domains == other.domains
            and np.array_equal(self.partisanship, other.partisanship)
            and (self.pageviews != other.pageviews).nnz == 0
            and np.array_equal(self.event_user, other.event_user)
            and np.array_equal(self.event_domain, other.event_domain)
            and np.array_equal(self.event_time, other.event_time, equal_nan=True)
            and np.array_equal(self.event_pageviews, other.event_pageviews)
            and dict(self.scores) == dict(other.scores)
            and dict(self.slants) == dict(other.slants)
            and self.min_visitors == other.min_visitors
        )


def build_panel(
    records: Iterable[TrafficRecord],
    survey: Mapping[str, int],
    scores: Mapping[str, ScoreRecord] | None = None,
    slants: Mapping[str, float] | None = None,
    min_visitors: int = 30,
) -> PanelDataset:
    """Pool records across waves and apply the distinct-visitor threshold."""
    if min_visitors < 1:
        raise InputError("min_visitors must be a positive integer")
    records = list(records)
    missing = {r.user_id for r in records if r.user_id not in survey}
    if missing:
        log.warning("dropping %d users without a survey record", len(missing))
    records = [r for r in records if r.user_id in survey]

    visitors: dict[str, set[str]] = {}
    for r in records:
        visitors.setdefault(r.domain, set()).add(r.user_id)
    kept = sorted(d for d, v in visitors.items() if len(v) >= min_visitors)
    kept_set = set(kept)
    records = [r for r in records if r.domain in kept_set]
    users = sorted({r.user_id for r in records})

    uidx = {u: i for i, u in enumerate(users)}
    didx = {d: j for j, d in enumerate(kept)}
    n = len(records)
    ev_u = np.fromiter((uidx[r.user_id] for r in records), dtype=np.int64, count=n)
    ev_d = np.fromiter((didx[r.domain] for r in records), dtype=np.int64, count=n)
    ev_t = np.fromiter((np.nan if r.timestamp is None else r.timestamp for r in records), dtype=float, count=n)
    ev_pv = np.fromiter((r.pageviews for r in records), dtype=np.int64, count=n)
    # canonical event order makes the panel independent of file order
    order = np.lexsort((ev_pv, np.nan_to_num(ev_t, nan=-np.inf), ev_d, ev_u))
    ev_u, ev_d, ev_t, ev_pv = ev_u[order], ev_d[order], ev_t[order], ev_pv[order]

    counts = sp.csr_matrix((ev_pv, (ev_u, ev_d)), shape=(len(users), len(kept)), dtype=np.int64)
    counts.sum_duplicates()
    counts.sort_indices()
    return PanelDataset(
        users=tuple(users),
        partisanship=np.array([survey[u] for u in users], dtype=np.int64),
        domains=tuple(kept),
        pageviews=counts,
        event_user=ev_u,
        event_domain=ev_d,
        event_time=ev_t,
        event_pageviews=ev_pv,
        scores=dict(scores or {}),
        slants=dict(slants or {}),
        min_visitors=min_visitors,
        dropped_users=len(missing),
    )


def load_panel(
    traffic_paths: Sequence,
    survey_path,
    scores_path,
    slants_path=None,
    min_visitors: int = 30,
) -> PanelDataset:
    records: list[TrafficRecord] = []
    for p in traffic_paths:
        records.extend(read_traffic(p))
    survey = read_survey(survey_path)
    scores = read_scores(scores_path)
    slants = read_slants(slants_path) if slants_path else {}
    return build_panel(records, survey, scores, slants, min_visitors)


# --------------------------------------------------------------------------
# ratings

def tfidf(counts: sp.csr_matrix, idf_counts: sp.csr_matrix | None = None) -> sp.csr_matrix:
    """TF-IDF ratings with the sparsity pattern of ``counts``.

    Term frequency is each user's pageview share; the inverse document
    frequency is ``log(total / domain_total)`` taken from ``idf_counts``
    (default: ``counts`` itself). Explicit zeros are kept so that the stored
    pattern is exactly the visited cells.
    """
    counts = sp.csr_matrix(counts, dtype=float)
    ref = counts if idf_counts is None else sp.csr_matrix(idf_counts, dtype=float)
    total = ref.sum()
    col = np.asarray(ref.sum(axis=0)).ravel()
    row = np.asarray(counts.sum(axis=1)).ravel()
    with np.errstate(divide="ignore"):
        idf = np.log(total / col)
    rows = np.repeat(np.arange(counts.shape[0]), np.diff(counts.indptr))
    data = counts.data / row[rows] * idf[counts.indices]
    return sp.csr_matrix((data, counts.indices.copy(), counts.indptr.copy()), shape=counts.shape)


@dataclass(frozen=True, eq=False)
class RatingsMatrix:
    """TF-IDF ratings split into a training and a testing partition.

    ``train`` and ``test`` hold ratings; ``train_counts`` and ``test_counts``
    hold the underlying pageviews with the identical sparsity pattern. Under
    a random split the two patterns are disjoint per user; under a
    longitudinal split the same domain may appear in both.
    """

    users: tuple[str, ...]
    domains: tuple[str, ...]
    train: sp.csr_matrix
    test: sp.csr_matrix
    train_counts: sp.csr_matrix
    test_counts: sp.csr_matrix
    mode: str = "none"

    @property
    def shape(self):
        return self.train.shape

    def train_mask(self) -> sp.csr_matrix:
        return (self.train_counts > 0).astype(np.int8).tocsr()

    def test_domains(self, u: int) -> np.ndarray:
        return self.test_counts.indices[self.test_counts.indptr[u]:self.test_counts.indptr[u + 1]]

    def test_ratings(self, u: int) -> np.ndarray:
        return self.test.data[self.test.indptr[u]:self.test.indptr[u + 1]]

    def triplets(self):
        """Yield ``(user_id, domain, rating, split)`` in row-major order."""
        for name, mat in (("train", self.train), ("test", self.test)):
            for u in range(mat.shape[0]):
                lo, hi = mat.indptr[u], mat.indptr[u + 1]
                for j, v in zip(mat.indices[lo:hi], mat.data[lo:hi]):
                    yield self.users[u], self.domains[j], float(v), name


def build_ratings(panel: PanelDataset) -> RatingsMatrix:
    """Ratings for the whole panel; every visited cell is in the training part."""
    if panel.n_users == 0 or panel.pageviews.sum() < 1:
        raise InputError("panel has no traffic")
    counts = panel.pageviews
    empty = sp.csr_matrix(counts.shape, dtype=float)
    return RatingsMatrix(
        users=panel.users,
        domains=panel.domains,
        train=tfidf(counts),
        test=empty,
        train_counts=counts.copy(),
        test_counts=sp.csr_matrix(counts.shape, dtype=np.int64),
    )


def _mask_rows(mat: sp.csr_matrix, keep: np.ndarray) -> sp.csr_matrix:
    """Keep the stored entries flagged in ``keep`` (aligned with ``mat.data``)."""
    mat = sp.csr_matrix(mat)
    rows = np.repeat(np.arange(mat.shape[0]), np.diff(mat.indptr))
    out = sp.csr_matrix((mat.data[keep], (rows[keep], mat.indices[keep])), shape=mat.shape)
    out.sort_indices()
    return out


def split(
    panel: PanelDataset,
    mode: str = "random",
    train_fraction: float = 0.7,
    boundary: float | None = None,
    seed: int | None = None,
) -> RatingsMatrix:
    """Partition each user's visited domains into training and testing sets.

    ``random``: each visited cell goes to training with probability
    ``train_fraction``, drawn independently per cell from a generator seeded
    with ``seed``; ratings are those of the whole panel.

    ``longitudinal``: pageviews timestamped before ``boundary`` (UTC seconds)
    are training traffic, the rest testing traffic. Training ratings are the
    TF-IDF of training counts. Testing ratings use the testing term
    frequencies with IDF statistics from the training counts only; test cells
    for domains with no training traffic are dropped.
    """
    counts = panel.pageviews
    if mode == "random":
        if seed is None:
            raise InputError("random split requires a seed")
        if not 0.0 < train_fraction < 1.0:
            raise InputError("train_fraction must lie in (0, 1)")
        ratings = tfidf(counts)
        rng = np.random.default_rng(seed)
        in_train = rng.random(counts.nnz) < train_fraction
        train_c = _mask_rows(counts, in_train)
        test_c = _mask_rows(counts, ~in_train)
        train_r = _mask_rows(ratings, in_train)
        test_r = _mask_rows(ratings, ~in_train)
    elif mode == "longitudinal":
        if boundary is None:
            raise InputError("longitudinal split requires a boundary timestamp")
        if not panel.has_timestamps():
            raise InputError("longitudinal split requires timestamps on every traffic record")
        before = panel.event_time < boundary
        shape = counts.shape

        def _counts(sel):
            m = sp.csr_matrix(
                (panel.event_pageviews[sel], (panel.event_user[sel], panel.event_domain[sel])),
                shape=shape, dtype=np.int64,
            )
            m.sum_duplicates()
            m.sort_indices()
            return m

        train_c = _counts(before)
        test_c = _counts(~before)
        if train_c.nnz == 0 or test_c.nnz == 0:
            raise InputError("longitudinal split leaves the training or testing set empty")
        trained_cols = np.asarray(train_c.sum(axis=0)).ravel() > 0
        test_c = _mask_rows(test_c, trained_cols[test_c.indices])
        train_r = tfidf(train_c)
        test_r = tfidf(test_c, idf_counts=train_c)
    else:
        raise InputError(f"unknown split mode {mode!r}")

    if train_c.nnz == 0 or test_c.nnz == 0:
        raise InputError("split leaves the training or testing set empty for every user")
    return RatingsMatrix(
        users=panel.users,
        domains=panel.domains,
        train=train_r,
        test=test_r,
        train_counts=train_c,
        test_counts=test_c,
        mode=mode,
    )


# --------------------------------------------------------------------------
# serialization

def panel_to_json(panel: PanelDataset) -> dict:
    pv = panel.pageviews.tocoo()
    return {
        "min_visitors": panel.min_visitors,
        "dropped_users": panel.dropped_users,
        "users": [{"user_id": u, "partisanship": int(s)} for u, s in zip(panel.users, panel.partisanship)],
        "domains": list(panel.domains),
        "pageviews": [[int(i), int(j), int(v)] for i, j, v in zip(pv.row, pv.col, pv.data)],
        "events": {
            "user": panel.event_user.tolist(),
            "domain": panel.event_domain.tolist(),
            "timestamp": [None if np.isnan(t) else float(t) for t in panel.event_time],
            "pageviews": panel.event_pageviews.tolist(),
        },
        "scores": {d: {"score": r.score, "category": r.category.value} for d, r in sorted(panel.scores.items())},
        "slants": dict(sorted(panel.slants.items())),
    }


def panel_from_json(doc: Mapping) -> PanelDataset:
    try:
        users = tuple(u["user_id"] for u in doc["users"])
        part = np.array([u["partisanship"] for u in doc["users"]], dtype=np.int64)
        domains = tuple(doc["domains"])
        trip = np.array(doc["pageviews"], dtype=np.int64).reshape(-1, 3)
        counts = sp.csr_matrix((trip[:, 2], (trip[:, 0], trip[:, 1])), shape=(len(users), len(domains)), dtype=np.int64)
        counts.sort_indices()
        ev = doc["events"]
        ev_t = np.array([np.nan if t is None else t for t in ev["timestamp"]], dtype=float)
        scores = {d: ScoreRecord(d, float(r["score"]), Category(r["category"])) for d, r in doc["scores"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed panel manifest: {exc}") from None
    return PanelDataset(
        users=users,
        partisanship=part,
        domains=domains,
        pageviews=counts,
        event_user=np.array(ev["user"], dtype=np.int64),
        event_domain=np.array(ev["domain"], dtype=np.int64),
        event_time=ev_t,
        event_pageviews=np.array(ev["pageviews"], dtype=np.int64),
        scores=scores,
        slants={d: float(s) for d, s in doc.get("slants", {}).items()},
        min_visitors=int(doc.get("min_visitors", 30)),
        dropped_users=int(doc.get("dropped_users", 0)),
    )


def save_panel(panel: PanelDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(panel_to_json(panel), fh, sort_keys=True)


def read_panel(path) -> PanelDataset:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: {exc}") from None
    return panel_from_json(doc)


def write_triplets(matrix: RatingsMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "domain", "rating", "split"])
        for u, d, v, s in matrix.triplets():
            w.writerow([u, d, repr(v), s])
