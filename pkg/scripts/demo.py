"""Run every subcommand once on a small synthetic panel.

    python scripts/demo.py [workdir]
"""
import json
import sys
from pathlib import Path

from audiencediv.cli import main


def run(*argv):
    print("$ audiencediv", " ".join(argv))
    code = main(list(argv))
    if code:
        sys.exit(code)


work = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
sim = work / "sim"
run("simulate", "--seed", "1", "--n-users", "600", "--n-domains", "120", "--out", str(sim))
manifest = json.loads((sim / "manifest.json").read_text())
inputs = ["--traffic", *[str(sim / f) for f in manifest["files"]["traffic"]],
          "--survey", str(sim / "survey.csv"), "--scores", str(sim / "scores.csv"),
          "--slants", str(sim / "slants.csv"), "--min-visitors", "20"]
run("ingest", *inputs, "--out", str(work / "ingest"))
panel = ["--panel", str(work / "ingest" / "panel.json")]
run("diversity", *panel, "--out", str(work / "diversity"))
run("stats", *panel, "--out", str(work / "stats"))
for cmd, extra in [("similarity", []), ("recommend", []), ("evaluate", ["--min-bin-users", "20"]),
                   ("deltaq", []), ("stratify", []), ("nulltest", ["--replicates", "200"]), ("fairness", [])]:
    run(cmd, *panel, *extra, "--out", str(work / cmd))

print(json.dumps(json.loads((work / "nulltest" / "null_test.json").read_text()), indent=2))
print((work / "evaluate" / "per_k.csv").read_text())
