"""Command-line runner: ``privlearn run|sweep|privacy CONFIG [--jobs N] [--seed S] [--out DIR]``.

Exit codes: 0 success, 2 invalid configuration, 3 divergence.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

from privlearn import config as config_mod
from privlearn.config import ConfigError
from privlearn.experiment import run_experiment, run_privacy, run_sweep
from privlearn.learn import DivergenceError
from privlearn.metrics import to_db

log = logging.getLogger("privlearn")

METRICS_COLUMNS = (
    "scheme", "preset", "iter", "msd_centroid", "msd_avg", "disagreement", "msd_centroid_db", "msd_avg_db",
)
SUMMARY_COLUMNS = (
    "scheme", "preset", "param_name", "param_value",
    "ss_msd_centroid", "ss_msd_avg", "ss_disagreement", "stderr_msd_centroid",
)
PRIVACY_COLUMNS = ("iter", "epsilon", "delta_empirical")

EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def fmt(x) -> str:
    """Shortest round-trip repr, so identical floats always print identically."""
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _write(path: Path, columns, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)
    log.info("wrote %s", path)


def _summary_row(scheme, preset, name, value, steady):
    return [scheme, preset, name, fmt(value)] + [fmt(steady[c]) for c in SUMMARY_COLUMNS[4:]]


def cmd_run(cfg, jobs: int) -> None:
    out = Path(cfg.output)
    results = run_experiment(cfg, jobs=jobs)
    metric_rows, summary_rows = [], []
    for res in results:
        m = res.mean
        c_db, a_db = to_db(m.msd_centroid), to_db(m.msd_avg)
        for i in range(m.steps):
            metric_rows.append([
                res.scheme, res.preset, str(i + 1),
                fmt(m.msd_centroid[i]), fmt(m.msd_avg[i]), fmt(m.disagreement[i]),
                fmt(c_db[i]), fmt(a_db[i]),
            ])
        summary_rows.append(_summary_row(res.scheme, res.preset, "mu", cfg.run.mu, res.steady))
    _write(out / "metrics.csv", METRICS_COLUMNS, metric_rows)
    _write(out / "summary.csv", SUMMARY_COLUMNS, summary_rows)


def cmd_sweep(cfg, jobs: int) -> None:
    if cfg.sweep is None:
        raise ConfigError("sweep", "the sweep command needs a sweep section")
    rows = run_sweep(cfg, jobs=jobs)
    _write(
        Path(cfg.output) / "summary.csv",
        SUMMARY_COLUMNS,
        [_summary_row(r.scheme, r.preset, r.param_name, r.param_value, r.steady) for r in rows],
    )


def cmd_privacy(cfg, jobs: int) -> None:
    if cfg.privacy is None:
        raise ConfigError("privacy", "the privacy command needs a privacy section")
    ledger = run_privacy(cfg, jobs=jobs)
    deltas = ledger.delta_series
    rows = [
        [str(i), fmt(eps), "" if deltas is None else fmt(deltas[i])]
        for i, eps in enumerate(ledger.epsilon_series)
    ]
    _write(Path(cfg.output) / "privacy.csv", PRIVACY_COLUMNS, rows)
    if deltas is not None:
        log.info("sensitivity bound %.6g violated at %.1f%% of iterations", ledger.bound, 100 * ledger.violation_rate())


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "privacy": cmd_privacy}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privlearn", description="Privatised distributed learning simulator")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("config", help="YAML experiment configuration")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for replicas")
    parser.add_argument("--seed", type=int, default=None, help="override run.seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = config_mod.load(args.config).with_overrides(seed=args.seed, output=args.out)
        COMMANDS[args.command](cfg, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: scheme {exc.scheme} diverged at iteration {exc.iteration}", file=sys.stderr)
        return EXIT_DIVERGED
    return 0


if __name__ == "__main__":
    sys.exit(main())
