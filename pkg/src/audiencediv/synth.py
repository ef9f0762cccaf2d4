"""Synthetic panels with a planted diversity-reliability relationship.

Each domain draws its audience from a discretized Gaussian over the 7-point
partisanship scale (location ``mu``, concentration ``kappa``). Its planted
partisan variance is the variance of that audience distribution, and its
reliability score is a linear function of it plus noise, with an extra slope
for right-leaning audiences. Users pick domains by popularity, partisan
affinity and topical interest, and spread a heavy-tailed pageview budget over
them.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError
from .ingest import PARTISANSHIP_LEVELS, TRUST_THRESHOLD, format_timestamp

SCALE = np.arange(1, PARTISANSHIP_LEVELS + 1, dtype=float)
# roughly the shape of a US party-ID distribution, slightly more Democrats
PARTY_WEIGHTS = (0.20, 0.13, 0.12, 0.15, 0.10, 0.12, 0.18)
SYMMETRIC_WEIGHTS = (0.18, 0.12, 0.12, 0.16, 0.12, 0.12, 0.18)
WAVE_START = 1475798400  # 2016-10-07T00:00:00Z
WAVE_DAYS = 38
WAVE_GAP_DAYS = 60


@dataclass
class SynthConfig:
    n_users: int = 1000
    n_domains: int = 200
    seed: int = 0
    # reliability: Q = beta0 + beta1 * var + beta2 * [republican] * var + noise
    beta0: float = -40.0
    beta1: float = 25.0
    beta2: float = 6.0
    noise_sd: float = 12.0
    # audience model; small kappa keeps audiences broad (mean variance near 4)
    kappa_range: tuple[float, float] = (0.01, 0.25)
    # activity model
    breadth_median: float = 22.0
    breadth_sigma: float = 0.45
    budget_exponent: float = 2.0
    budget_cap: int = 2000
    concentration: float = 2.0
    topics: int = 8
    n_waves: int = 3
    min_visitors: int = 30
    symmetric: bool = False
    unscored_fraction: float = 0.1
    non_news_fraction: float = 0.04
    slant_coverage: float = 0.8
    slant_noise: float = 0.3

    def validate(self):
        if self.n_users < 50 or self.n_domains < 20:
            raise InputError("synthetic panels need >= 50 users and >= 20 domains")
        if self.min_visitors > self.n_users:
            raise InputError("min_visitors cannot be reached with this many users")
        if self.breadth_median >= self.n_domains:
            raise InputError("median breadth must be below the number of domains")
        if self.n_waves < 1:
            raise InputError("need at least one wave")


@dataclass
class SyntheticPanel:
    config: SynthConfig
    user_ids: list[str]
    partisanship: np.ndarray
    domains: list[str]
    mu: np.ndarray
    kappa: np.ndarray
    planted_variance: np.ndarray
    republican: np.ndarray
    quality: np.ndarray
    category: list[str | None]
    slant: np.ndarray
    traffic: list[list[tuple[str, str, float, int]]] = field(default_factory=list)


def audience_distribution(mu, kappa, weights) -> np.ndarray:
    """Audience share over the scale: population weight times partisan affinity."""
    mu = np.atleast_1d(mu)[:, None]
    kappa = np.atleast_1d(kappa)[:, None]
    q = np.asarray(weights)[None, :] * affinity(mu, kappa)
    return q / q.sum(axis=1, keepdims=True)


def affinity(mu, kappa, s=SCALE):
    return np.exp(-0.5 * kappa * (s - mu) ** 2)


def planted_variance(dist: np.ndarray) -> np.ndarray:
    m = dist @ SCALE
    return (dist * (SCALE[None, :] - m[:, None]) ** 2).sum(axis=1)


def _names(prefix, n):
    width = len(str(n - 1))
    return [f"{prefix}{i:0{width}d}" for i in range(n)]


def generate(cfg: SynthConfig) -> SyntheticPanel:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    weights = np.array(SYMMETRIC_WEIGHTS if cfg.symmetric else PARTY_WEIGHTS)
    weights = weights / weights.sum()
    U, D = cfg.n_users, cfg.n_domains

    # users
    party = rng.choice(PARTISANSHIP_LEVELS, size=U, p=weights) + 1
    interest = rng.dirichlet(np.full(cfg.topics, 0.5), size=U)
    breadth = np.clip(np.round(cfg.breadth_median * rng.lognormal(0.0, cfg.breadth_sigma, U)), 5, D // 2).astype(int)
    budget = np.minimum(rng.zipf(cfg.budget_exponent, U), cfg.budget_cap) * breadth

    if cfg.symmetric:
        # user u + U//2 is the reflection of user u
        hu = U // 2
        party[hu:2 * hu] = PARTISANSHIP_LEVELS + 1 - party[:hu]
        interest[hu:2 * hu] = interest[:hu]
        breadth[hu:2 * hu] = breadth[:hu]
        budget[hu:2 * hu] = budget[:hu]

    # domains
    mu = rng.uniform(1.0, 7.0, D)
    if cfg.symmetric:
        half = D // 2
        mirror = np.arange(D)
        mirror[:half] += half
        mirror[half:2 * half] -= half
        mu[half:2 * half] = 8.0 - mu[:half]
    kappa = np.exp(rng.uniform(*np.log(cfg.kappa_range), D))
    if cfg.symmetric:
        kappa[half:2 * half] = kappa[:half]
    dist = audience_distribution(mu, kappa, weights)
    var = planted_variance(dist)
    mean_s = dist @ SCALE
    republican = mean_s > 4.0
    pop = rng.lognormal(0.0, 0.8, D)
    topic = rng.integers(cfg.topics, size=D)

    noise = rng.normal(0.0, cfg.noise_sd, D)
    if cfg.symmetric:
        pop[half:2 * half] = pop[:half]
        topic[half:2 * half] = topic[:half]
        noise[half:2 * half] = noise[:half]
    q = cfg.beta0 + cfg.beta1 * var + cfg.beta2 * republican * var + noise
    q = np.clip(np.round(q, 1), 0.0, 100.0)
    category: list[str | None] = ["green" if x >= TRUST_THRESHOLD else "red" for x in q]
    role = rng.random(D)
    if cfg.symmetric:
        role[half:2 * half] = role[:half]
    for j in range(D):
        if role[j] < cfg.unscored_fraction:
            category[j] = None
        elif role[j] < cfg.unscored_fraction + cfg.non_news_fraction:
            category[j] = "satire" if role[j] < cfg.unscored_fraction + cfg.non_news_fraction / 2 else "platform"

    slant_noise = rng.normal(0.0, cfg.slant_noise, D)
    covered = rng.random(D) < cfg.slant_coverage
    if cfg.symmetric:
        # every domain-level draw is mirrored so neither side is favoured
        slant_noise[half:2 * half] = -slant_noise[:half]
        covered[half:2 * half] = covered[:half]
    slant = np.clip((mean_s - 4.0) / 1.5 + slant_noise, -2.0, 2.0)
    slant[~covered] = np.nan

    # visits: Gumbel top-k sampling without replacement from the choice weights
    aff = affinity(mu[None, :], kappa[None, :], party[:, None].astype(float))
    topical = 0.25 + interest[:, topic]
    w = pop[None, :] * aff * topical
    keys = np.log(w) + rng.gumbel(size=(U, D))
    if cfg.symmetric:
        keys[hu:2 * hu] = keys[:hu, mirror]
    chosen = np.argsort(-keys, axis=1, kind="stable")

    user_ids = _names("u", U)
    domains = [f"site{j:03d}.example" for j in range(D)]
    waves: list[list[tuple[str, str, float, int]]] = [[] for _ in range(cfg.n_waves)]
    mirrored = {}
    for u in range(U):
        if cfg.symmetric and hu <= u < 2 * hu:
            # replay the twin's visits on the reflected domains
            for wv, recs in mirrored.pop(u - hu).items():
                waves[wv].extend((user_ids[u], domains[mirror[j]], ts, n) for j, ts, n in recs)
            continue
        cols = np.sort(chosen[u, :breadth[u]])
        share = w[u, cols] ** cfg.concentration
        pv = 1 + rng.multinomial(budget[u] - breadth[u], share / share.sum())
        split = rng.dirichlet(np.ones(cfg.n_waves), size=len(cols))
        for j, total, frac in zip(cols, pv, split):
            per_wave = rng.multinomial(total - 1, frac)
            per_wave[rng.integers(cfg.n_waves)] += 1
            for wv, n in enumerate(per_wave):
                if n == 0:
                    continue
                start = WAVE_START + wv * (WAVE_DAYS + WAVE_GAP_DAYS) * 86400
                ts = start + int(rng.integers(WAVE_DAYS * 86400))
                waves[wv].append((user_ids[u], domains[j], float(ts), int(n)))
                if cfg.symmetric and u < hu:
                    mirrored.setdefault(u, {}).setdefault(wv, []).append((j, float(ts), int(n)))
    return SyntheticPanel(cfg, user_ids, party, domains, mu, kappa, var, republican, q, category, slant, waves)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_panel(panel: SyntheticPanel, outdir) -> dict:
    """Write traffic waves, survey, scores, slants and a manifest; return the manifest."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    traffic = []
    for i, rows in enumerate(panel.traffic, start=1):
        name = f"traffic_wave{i}.csv"
        _write_csv(out / name, ("user_id", "domain", "timestamp", "pageviews"),
                   ((u, d, format_timestamp(t), n) for u, d, t, n in sorted(rows)))
        traffic.append(name)
    _write_csv(out / "survey.csv", ("user_id", "partisanship"),
               zip(panel.user_ids, (int(x) for x in panel.partisanship)))
    _write_csv(out / "scores.csv", ("domain", "score", "category"),
               ((d, f"{q:.1f}", c) for d, q, c in zip(panel.domains, panel.quality, panel.category) if c))
    _write_csv(out / "slants.csv", ("domain", "slant"),
               ((d, f"{s:.4f}") for d, s in zip(panel.domains, panel.slant) if np.isfinite(s)))
    cfg = asdict(panel.config)
    manifest = {
        "config": cfg,
        "files": {"traffic": traffic, "survey": "survey.csv", "scores": "scores.csv", "slants": "slants.csv"},
        "planted": {
            "beta0": panel.config.beta0,
            "beta1": panel.config.beta1,
            "beta2": panel.config.beta2,
            "noise_sd": panel.config.noise_sd,
        },
        "boundary": format_timestamp(WAVE_START + 19 * 86400),
        "domains": [
            {"domain": d, "mu": round(float(m), 6), "kappa": round(float(k), 6),
             "planted_variance": round(float(v), 6), "republican": bool(r)}
            for d, m, k, v, r in zip(panel.domains, panel.mu, panel.kappa, panel.planted_variance, panel.republican)
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def simulate(cfg: SynthConfig, outdir) -> dict:
    return write_panel(generate(cfg), outdir)
