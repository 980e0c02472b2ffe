"""Step-size and noise-variance sweeps behind the scaling claims.

    python scripts/scaling_sweeps.py [--jobs N]

Runs the three sweep configs and prints the steady-state ratios next to the
ranges the theory suggests.
"""
import argparse
from pathlib import Path

from privlearn.config import load
from privlearn.experiment import run_sweep

ROOT = Path(__file__).resolve().parents[1]

CASES = [
    ("sweep_mu_random.yaml", "ss_msd_avg", "random: msd_avg ratio mu 0.005 / 0.01", (1.5, 3.0)),
    ("sweep_mu_graph_homomorphic.yaml", "ss_msd_centroid", "GH: centroid ratio mu 0.005 / 0.01", (0.75, 1.33)),
    ("sweep_sigma_graph_homomorphic.yaml", "ss_disagreement", "GH: disagreement ratio sigma_g2 0.04 / 0.01", (3.0, 5.0)),
]


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    for name, key, label, (lo, hi) in CASES:
        rows = run_sweep(load(ROOT / "configs" / name), jobs=args.jobs)
        first, second = rows[0].steady[key], rows[1].steady[key]
        ratio = second / first
        flag = "inside" if lo <= ratio <= hi else "OUTSIDE"
        print(f"{label}: {ratio:.3f} ({flag} [{lo}, {hi}]); values {first:.4g} -> {second:.4g}")


if __name__ == "__main__":
    main()
