import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", max_examples=100, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

from audiencediv.ingest import build_panel, TrafficRecord, ScoreRecord, Category, load_panel  # noqa: E402
from audiencediv.synth import SynthConfig, simulate  # noqa: E402


def make_panel(counts, partisanship=None, scores=None, slants=None, min_visitors=1, times=None):
    """Panel from a dense users x domains count array (users u0.., domains d0..)."""
    counts = np.asarray(counts)
    U, D = counts.shape
    width = len(str(max(U, D) - 1))
    users = [f"u{i:0{width}d}" for i in range(U)]
    doms = [f"d{j:0{width}d}.com" for j in range(D)]
    recs = []
    for i in range(U):
        for j in range(D):
            if counts[i, j] > 0:
                t = None if times is None else float(times[i, j])
                recs.append(TrafficRecord(users[i], doms[j], t, int(counts[i, j])))
    part = partisanship if partisanship is not None else [4] * U
    survey = dict(zip(users, (int(s) for s in part)))
    score_map = {}
    if scores is not None:
        for d, q in zip(doms, scores):
            if q is not None and not np.isnan(q):
                cat = Category.GREEN if q >= 60 else Category.RED
                score_map[d] = ScoreRecord(d, float(q), cat)
    slant_map = dict(zip(doms, slants)) if slants is not None else {}
    return build_panel(recs, survey, score_map, slant_map, min_visitors)


@pytest.fixture
def tiny_counts():
    return np.array([[2, 0], [1, 1]])


@pytest.fixture(scope="session")
def small_synth(tmp_path_factory):
    """A small synthetic panel on disk plus its loaded form."""
    out = tmp_path_factory.mktemp("synth")
    cfg = SynthConfig(n_users=300, n_domains=60, seed=11, min_visitors=10, breadth_median=15)
    manifest = simulate(cfg, out)
    panel = load_panel([out / f for f in manifest["files"]["traffic"]], out / "survey.csv",
                       out / "scores.csv", out / "slants.csv", min_visitors=10)
    return out, manifest, panel


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
