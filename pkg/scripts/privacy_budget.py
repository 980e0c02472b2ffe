"""Epsilon budget and measured sensitivity for a swapped agent dataset.

    python scripts/privacy_budget.py [--config configs/privacy.yaml] [--replicas R]
"""
import argparse
import dataclasses
from pathlib import Path

import numpy as np

from privlearn.config import load
from privlearn.experiment import run_privacy

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(ROOT / "configs" / "privacy.yaml"))
    ap.add_argument("--replicas", type=int, default=None)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    cfg = load(args.config)
    if args.replicas is not None:
        cfg = dataclasses.replace(cfg, privacy=dataclasses.replace(cfg.privacy, replicas=args.replicas))
    led = run_privacy(cfg, jobs=args.jobs)
    n = len(led.epsilon_series) - 1
    print(f"B = {led.B:.4g}, B' = {led.B_prime:.4g}, model gap = {led.model_gap:.4g}")
    print(f"sensitivity bound B + B' + sqrt(P) gap = {led.bound:.4g}")
    print(f"epsilon({n}) = {led.epsilon_series[-1]:.4g} (linear growth, {led.epsilon_series[1]:.4g} per iteration)")
    if led.delta_series is not None:
        print(f"max measured Delta = {np.max(led.delta_series):.4g}; violation rate {led.violation_rate():.2%}")


if __name__ == "__main__":
    main()
