"""Steady-state comparison of the four noise schemes on the 30-agent ridge problem.

    python scripts/scheme_ordering.py [--config configs/regression.yaml] [--jobs N]

Writes metrics.csv and summary.csv to the config's output directory and prints
the steady-state table.
"""
import argparse
import sys
from pathlib import Path

from privlearn import cli
from privlearn.config import load
from privlearn.experiment import run_experiment
from privlearn.metrics import to_db

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(ROOT / "configs" / "regression.yaml"))
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    cfg = load(args.config).with_overrides(output=args.out)
    results = run_experiment(cfg, jobs=args.jobs)
    print(f"{'scheme':<26}{'MSD centroid (dB)':>20}{'MSD avg (dB)':>16}{'disagreement (dB)':>20}")
    for r in results:
        s = r.steady
        print(f"{r.scheme:<26}{float(to_db(s['ss_msd_centroid'])):>20.2f}{float(to_db(s['ss_msd_avg'])):>16.2f}"
              f"{float(to_db(s['ss_disagreement'])):>20.2f}")
    # also persist the CSVs through the CLI code path
    return cli.main(["run", args.config, "--jobs", str(args.jobs)] + (["--out", args.out] if args.out else []))


if __name__ == "__main__":
    sys.exit(main())
