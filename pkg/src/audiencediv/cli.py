"""Command-line entry point: ``audiencediv <subcommand> [flags]``.

Every run writes ``config.json`` (the fully resolved configuration) next to
its reports. Errors exit with 1 (bad input) or 2 (numerical failure) and
leave an ``error.json`` in the output directory.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
from pathlib import Path

from . import pipeline as pl
from .diversity import diversity_rows, profile_domains
from .errors import ComputationError, InputError
from .ingest import load_panel, read_panel, save_panel, split, write_triplets
from .similarity import similarity_table
from .synth import SynthConfig, simulate

log = logging.getLogger("audiencediv")

ENV_OUT = "AUDIENCEDIV_OUT"
ENV_THREADS = "AUDIENCEDIV_THREADS"

COMMANDS = ("simulate", "ingest", "diversity", "similarity", "recommend", "evaluate",
            "deltaq", "stratify", "nulltest", "fairness", "stats")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _add_common(p):
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="resolved config JSON to rerun")
    p.add_argument("--out", default=S, help="output directory")
    p.add_argument("--threads", type=int, default=S)


def _add_inputs(p):
    S = argparse.SUPPRESS
    p.add_argument("--panel", default=S, help="panel JSON written by `ingest`")
    p.add_argument("--traffic", nargs="+", default=S, help="traffic CSV files, one per wave")
    p.add_argument("--survey", default=S)
    p.add_argument("--scores", default=S)
    p.add_argument("--slants", default=S)
    p.add_argument("--min-visitors", dest="min_visitors", type=int, default=S)


def _add_split(p):
    S = argparse.SUPPRESS
    p.add_argument("--split", choices=("random", "longitudinal"), default=S)
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--boundary", default=S, help="ISO-8601 UTC boundary for a longitudinal split")


def _add_model(p):
    S = argparse.SUPPRESS
    p.add_argument("--kernel", choices=("kendall", "pearson"), default=S)
    p.add_argument("--neighbors", type=int, default=S)
    p.add_argument("--metric", default=S)
    p.add_argument("--level", choices=("user", "pageview"), default=S)
    p.add_argument("--a", type=float, default=S)
    p.add_argument("--psi", type=float, default=S)
    p.add_argument("--t", type=float, default=S, help="logistic location (default: mean diversity)")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = _Parser(prog="audiencediv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a synthetic panel")
    _add_common(p)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--n-users", dest="n_users", type=int, default=S)
    p.add_argument("--n-domains", dest="n_domains", type=int, default=S)
    p.add_argument("--beta0", type=float, default=S)
    p.add_argument("--beta1", type=float, default=S)
    p.add_argument("--beta2", type=float, default=S)
    p.add_argument("--noise-sd", dest="noise_sd", type=float, default=S)
    p.add_argument("--symmetric", action="store_true", default=S)

    for name, extra in (
        ("ingest", "pool waves, filter domains, write the panel and ratings"),
        ("diversity", "audience diversity of every domain"),
        ("similarity", "pairwise user similarities"),
        ("recommend", "ranked lists per user"),
        ("evaluate", "per-k trust, precision and RMSE"),
        ("deltaq", "rank-discounted trust change per user"),
        ("stratify", "delta Q by user strata"),
        ("nulltest", "resampling null for CF+D precision"),
        ("fairness", "left/right false-positive rates"),
        ("stats", "domain-level correlations and regressions"),
    ):
        p = sub.add_parser(name, help=extra)
        _add_common(p)
        _add_inputs(p)
        if name not in ("diversity", "stats"):
            _add_split(p)
        if name not in ("ingest", "diversity", "stats"):
            _add_model(p)
        if name in ("recommend", "evaluate"):
            p.add_argument("--algo", dest="algorithms", type=_csv_list, default=S)
        if name in ("evaluate", "fairness"):
            p.add_argument("--k-max", dest="k_max", type=int, default=S)
        if name == "evaluate":
            p.add_argument("--min-bin-users", dest="min_bin_users", type=int, default=S)
            p.add_argument("--no-cap", dest="no_cap", action="store_true", default=S)
        if name in ("deltaq", "stratify"):
            p.add_argument("--alpha", type=float, default=S)
        if name == "stratify":
            p.add_argument("--strata", type=_csv_list, default=S)
        if name == "nulltest":
            p.add_argument("--replicates", type=int, default=S)
            p.add_argument("--k", type=int, default=S)
    return parser


_SYNTH_KEYS = {"n_users", "n_domains", "beta0", "beta1", "beta2", "noise_sd", "symmetric"}


def resolve_config(argv) -> pl.RunConfig:
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command", None)
    if not command:
        raise InputError(f"missing subcommand; choose from {', '.join(COMMANDS)}")
    doc: dict = {}
    if "config" in ns:
        path = Path(ns.pop("config"))
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from None
        if doc.get("command") not in (None, command):
            raise InputError(f"config was written by {doc['command']!r}, not {command!r}")
    synth = dict(doc.pop("synth", {}) or {})
    for key in list(ns):
        if key in _SYNTH_KEYS:
            synth[key] = ns.pop(key)
    if command == "simulate" and "seed" in ns:
        synth["seed"] = ns["seed"]
    doc.update(ns)
    doc["command"] = command
    if command == "simulate":
        doc["synth"] = synth
    if ENV_OUT in os.environ and "out" not in ns:
        doc["out"] = os.environ[ENV_OUT]
    if ENV_THREADS in os.environ and "threads" not in ns:
        try:
            doc["threads"] = int(os.environ[ENV_THREADS])
        except ValueError:
            raise InputError(f"{ENV_THREADS} must be an integer") from None
    cfg = pl.RunConfig.from_json(doc)
    try:
        cfg.validate()
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(str(exc)) from None
    return cfg


def _apply_threads(n: int):
    import numba

    # the portable layer; the TBB one warns on older system libraries
    numba.config.THREADING_LAYER = "workqueue"
    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def _load(cfg: pl.RunConfig):
    if cfg.panel:
        return read_panel(cfg.panel)
    if not (cfg.traffic and cfg.survey and cfg.scores):
        raise InputError("give --panel, or --traffic with --survey and --scores")
    for p in [*cfg.traffic, cfg.survey, cfg.scores] + ([cfg.slants] if cfg.slants else []):
        if not Path(p).exists():
            raise InputError(f"{p}: file not found")
    return load_panel(cfg.traffic, cfg.survey, cfg.scores, cfg.slants, cfg.min_visitors)


def execute(cfg: pl.RunConfig) -> list[str]:
    """Run one subcommand and return the report files it wrote."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _apply_threads(cfg.threads)
    pl.write_json(out / "config.json", cfg.to_json())
    cmd = cfg.command

    if cmd == "simulate":
        sc = SynthConfig(**cfg.synth)
        simulate(sc, out)
        return ["manifest.json"]

    panel = _load(cfg)
    if cmd == "ingest":
        save_panel(panel, out / "panel.json")
        write_triplets(split(panel, cfg.split, cfg.train_fraction, cfg.boundary_seconds(), cfg.seed),
                       out / "ratings.csv")
        return ["panel.json", "ratings.csv"]
    if cmd == "diversity":
        pl.write_rows(out / "diversity.csv", list(diversity_rows(profile_domains(panel))), pl.DIVERSITY_HEADER)
        return ["diversity.csv"]
    if cmd == "stats":
        corr, reg = pl.stats_reports(panel)
        pl.write_rows(out / "correlations.csv", corr, pl.CORRELATION_HEADER)
        pl.write_rows(out / "regressions.csv", reg, pl.REGRESSION_HEADER)
        return ["correlations.csv", "regressions.csv"]
    if cmd == "similarity":
        matrix = split(panel, cfg.split, cfg.train_fraction, cfg.boundary_seconds(), cfg.seed)
        table = similarity_table(matrix, cfg.kernel)
        rows = [dict(zip(pl.SIMILARITY_HEADER, r)) for r in table.rows()]
        pl.write_rows(out / "similarity.csv", rows, pl.SIMILARITY_HEADER)
        return ["similarity.csv"]

    exp = pl.build_experiment(panel, cfg)
    if not exp.candidates:
        raise ComputationError("no user has a scored, neighborhood-rated test domain")
    if cmd == "recommend":
        pl.write_rows(out / "recommendations.csv", pl.recommendation_rows(exp, cfg.algorithms), pl.RECOMMEND_HEADER)
        return ["recommendations.csv"]
    if cmd == "evaluate":
        pl.write_rows(out / "per_k.csv", pl.per_k_rows(exp, cfg), pl.PER_K_HEADER)
        return ["per_k.csv"]
    if cmd == "deltaq":
        pl.write_rows(out / "delta_q.csv", pl.delta_q_rows(pl.delta_q_results(exp, cfg.alpha)), pl.DELTA_Q_HEADER)
        return ["delta_q.csv"]
    if cmd == "stratify":
        pl.write_rows(out / "stratified.csv", pl.stratified_rows(exp, cfg), pl.STRATA_HEADER)
        return ["stratified.csv"]
    if cmd == "nulltest":
        pl.write_json(out / "null_test.json", pl.null_test(exp, cfg).to_json())
        return ["null_test.json"]
    if cmd == "fairness":
        pl.write_rows(out / "fairness.csv", pl.fairness_rows(exp, cfg), pl.FAIRNESS_HEADER)
        return ["fairness.csv"]
    raise InputError(f"unknown subcommand {cmd!r}")


def _write_error(out_dir, kind: str, message: str, code: int):
    try:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        pl.write_json(Path(out_dir) / "error.json", {"error": kind, "message": message, "exit_code": code})
    except OSError:
        pass


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    argv = sys.argv[1:] if argv is None else list(argv)
    out_dir = os.environ.get(ENV_OUT, "out")
    if "--out" in argv and argv.index("--out") + 1 < len(argv):
        out_dir = argv[argv.index("--out") + 1]
    try:
        cfg = resolve_config(argv)
        out_dir = cfg.out
        written = execute(cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        _write_error(out_dir, "input", str(exc), 1)
        return 1
    except ComputationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        _write_error(out_dir, "computation", str(exc), 2)
        return 2
    except (FloatingPointError, ArithmeticError, ValueError) as exc:
        log.debug("%s", traceback.format_exc())
        print(f"error: {exc}", file=sys.stderr)
        _write_error(out_dir, "computation", str(exc), 2)
        return 2
    for name in written:
        print(Path(cfg.out) / name)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
