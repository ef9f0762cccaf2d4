"""End-to-end experiment assembly shared by the command line and the tests."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import evaluation as ev
from . import stats
from .diversity import Level, Metric, diversity_map, profile_domains
from .errors import InputError
from .ingest import PanelDataset, RatingsMatrix, parse_timestamp, split
from .recommender import (
    Algorithm,
    Candidates,
    CFModel,
    LogisticParams,
    RankedList,
    build_candidates,
    diversity_terms,
    rank_all,
)
from .similarity import Kernel, SimilarityTable, similarity_table


@dataclass
class RunConfig:
    """Every knob of an analysis run; serialized next to its outputs."""

    command: str = ""
    traffic: list[str] = field(default_factory=list)
    survey: str | None = None
    scores: str | None = None
    slants: str | None = None
    panel: str | None = None
    out: str = "out"
    min_visitors: int = 30
    kernel: str = "kendall"
    neighbors: int = 10
    metric: str = "variance"
    level: str = "user"
    a: float = 1.0
    psi: float = 1.0
    t: float | None = None
    split: str = "random"
    train_fraction: float = 0.7
    seed: int = 0
    boundary: str | None = None
    k_max: int = 28
    min_bin_users: int = 100
    no_cap: bool = False
    alpha: float = 1.0
    replicates: int = 1000
    k: int = 1
    algorithms: list[str] = field(default_factory=lambda: ["cf", "cfd", "popularity", "actual"])
    strata: list[str] = field(default_factory=lambda: [k.value for k in stats.StratumKey])
    threads: int = 1
    synth: dict = field(default_factory=dict)

    def validate(self):
        Kernel(self.kernel)
        Metric(self.metric)
        Level(self.level)
        for a in self.algorithms:
            Algorithm(a)
        if self.split not in ("random", "longitudinal"):
            raise InputError(f"unknown split mode {self.split!r}")
        if self.split == "longitudinal" and not self.boundary:
            raise InputError("longitudinal split requires --boundary")
        if self.split == "random" and self.boundary:
            raise InputError("--boundary only applies to a longitudinal split")
        if self.neighbors < 1 or self.k_max < 1 or self.replicates < 1 or self.k < 1:
            raise InputError("neighbors, k-max, replicates and k must be positive")
        if self.threads < 1:
            raise InputError("--threads must be positive")

    def boundary_seconds(self) -> float | None:
        if self.boundary is None:
            return None
        try:
            ts = parse_timestamp(self.boundary)
        except ValueError as exc:
            raise InputError(f"bad boundary timestamp: {exc}") from None
        if ts is None:
            raise InputError("empty boundary timestamp")
        return ts

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass(eq=False)
class Experiment:
    panel: PanelDataset
    matrix: RatingsMatrix
    diversity: dict[str, float]
    params: LogisticParams
    table: SimilarityTable
    model: CFModel
    candidates: list[Candidates]
    lists: dict[Algorithm, list[RankedList]]


def build_experiment(panel: PanelDataset, cfg: RunConfig, diversity: dict | None = None, table=None) -> Experiment:
    """Split, score diversity on the training data, fit CF and rank candidates.

    ``diversity`` overrides the computed per-domain values (used by the null
    simulations); ``table`` reuses a similarity table built for the same split.
    """
    matrix = split(panel, cfg.split, cfg.train_fraction, cfg.boundary_seconds(), cfg.seed)
    if diversity is None:
        diversity = diversity_map(profile_domains(panel, matrix), cfg.metric, cfg.level)
    params = LogisticParams(cfg.a, cfg.psi, cfg.t).resolve(diversity)
    if table is None:
        table = similarity_table(matrix, cfg.kernel)
    model = CFModel(matrix, table, cfg.neighbors)
    g = diversity_terms(panel.domains, diversity, params)
    cands = build_candidates(model, panel.quality(), g)
    lists = rank_all(cands, ["cf", "cfd", "popularity", "actual"])
    return Experiment(panel, matrix, diversity, params, table, model, cands, lists)


# --------------------------------------------------------------------------
# reports

def per_k_rows(exp: Experiment, cfg: RunConfig) -> list[dict]:
    algs = [Algorithm(a) for a in cfg.algorithms]
    bins = ev.bin_over_users(
        {a: exp.lists[a] for a in algs},
        exp.lists[Algorithm.ACTUAL],
        k_max=cfg.k_max,
        min_bin_users=cfg.min_bin_users,
        cap=not cfg.no_cap,
    )
    return [b.row() for b in bins]


def delta_q_results(exp: Experiment, alpha: float, algorithms=("cf", "cfd", "popularity")):
    actual = {l.user: l for l in exp.lists[Algorithm.ACTUAL]}
    out = []
    for a in algorithms:
        for lst in exp.lists[Algorithm(a)]:
            out.append(ev.delta_q(lst, actual[lst.user], alpha))
    return out


def delta_q_rows(results) -> list[dict]:
    return [{"user_id": r.user, "algorithm": r.algorithm.value, "delta_q": r.delta_q,
             "k": r.k, "alpha": r.alpha} for r in results]


def stratified_rows(exp: Experiment, cfg: RunConfig) -> list[dict]:
    results = delta_q_results(exp, cfg.alpha)
    by_alg: dict[Algorithm, dict[str, float]] = {}
    for r in results:
        by_alg.setdefault(r.algorithm, {})[r.user] = r.delta_q
    evaluated = set().union(*(set(v) for v in by_alg.values())) if by_alg else set()
    rows = []
    for key in cfg.strata:
        key = stats.StratumKey(key)
        values = stats.user_statistics(exp.panel, exp.matrix, key, exp.table, cfg.neighbors)
        values = {u: v for u, v in values.items() if u in evaluated}
        if len(values) < 3:
            continue
        strata = [s for s in stats.stratify(values, key) if s.members]
        rows.extend(stats.stratified_delta_q(strata, by_alg))
    return rows


def null_test(exp: Experiment, cfg: RunConfig) -> ev.NullResult:
    return ev.resampling_null(exp.candidates, cfg.k, cfg.replicates, cfg.seed)


def fairness_rows(exp: Experiment, cfg: RunConfig) -> list[dict]:
    return ev.false_positive_rates(
        exp.lists[Algorithm.CF], exp.lists[Algorithm.CFD], exp.panel.slants, cfg.k_max
    )


def stats_reports(panel: PanelDataset) -> tuple[list[dict], list[dict]]:
    """Correlation and regression rows from whole-panel audience profiles."""
    obs = stats.domain_observations(panel, profile_domains(panel), metrics=tuple(Metric))
    return stats.correlation_report(obs, metrics=tuple(Metric)), stats.regression_report(obs)


def recommendation_rows(exp: Experiment, algorithms: Sequence[str]) -> list[dict]:
    rows = []
    for a in algorithms:
        for lst in exp.lists[Algorithm(a)]:
            for d, v, r in lst.entries():
                rows.append({"user_id": lst.user, "algorithm": lst.algorithm.value,
                             "rank": r, "domain": d, "rating": v})
    return rows


# --------------------------------------------------------------------------
# output helpers

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(round(v, 12))
    return v


def write_rows(path, rows: Sequence[dict], header: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(h)) for h in header])


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")


PER_K_HEADER = ["algorithm", "k", "n_users", "trust_mean", "trust_mean_se", "trust_binary",
                "trust_binary_se", "precision", "precision_se", "rmse", "rmse_se"]
DELTA_Q_HEADER = ["user_id", "algorithm", "delta_q", "k", "alpha"]
STRATA_HEADER = ["key", "stratum", "algorithm", "mean_delta_q", "sem", "n_users"]
FAIRNESS_HEADER = ["k", "side", "rate_mean", "rate_se", "n_users", "welch_t", "p_raw", "p_bonferroni"]
CORRELATION_HEADER = ["analysis", "x", "y", "control", "r", "p", "n"]
REGRESSION_HEADER = ["model", "term", "beta", "se", "p", "r2", "n"]
DIVERSITY_HEADER = ["domain", "metric", "level", "value", "mean_partisanship", "extremity", "n_users", "n_pageviews"]
RECOMMEND_HEADER = ["user_id", "algorithm", "rank", "domain", "rating"]
SIMILARITY_HEADER = ["user_a", "user_b", "kernel", "sim"]
