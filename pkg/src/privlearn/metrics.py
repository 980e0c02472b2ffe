"""Performance and diagnostic quantities computed from trajectories.

Series are indexed by iteration ``i = 1..steps`` (the initial state is not
reported). All stored values are linear; ``to_db`` is for display only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from privlearn.learn import Trajectory
from privlearn.objectives import Problem, full_gradient


def msd_centroid(trajectory: Trajectory, w_global) -> np.ndarray:
    err = trajectory.centroids[1:] - np.asarray(w_global)
    return np.einsum("ik,ik->i", err, err)


def msd_avg(trajectory: Trajectory, w_global) -> np.ndarray:
    err = trajectory.W[1:] - np.asarray(w_global)
    return np.einsum("ipk,ipk->i", err, err) / trajectory.W.shape[1]


def disagreement(trajectory: Trajectory) -> np.ndarray:
    """Average squared distance of the agents from the centroid."""
    dev = trajectory.W[1:] - trajectory.centroids[1:, None, :]
    return np.einsum("ipk,ipk->i", dev, dev) / trajectory.W.shape[1]


def to_db(x) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(x, dtype=float))


def default_window(steps: int) -> int:
    return max(1, steps // 10)


def steady_state(series, window: int | None = None) -> float:
    """Mean over the trailing ``window`` iterations, then over replicas.

    ``series`` is ``(steps,)`` or ``(replicas, steps)``.
    """
    s = np.atleast_2d(np.asarray(series, dtype=float))
    steps = s.shape[1]
    window = default_window(steps) if window is None else window
    if not 1 <= window <= steps:
        raise ValueError(f"window must lie in [1, {steps}]")
    return float(s[:, -window:].mean(axis=1).mean())


def steady_state_stderr(series, window: int | None = None) -> float:
    """Across-replica standard error of the per-replica steady-state values."""
    s = np.atleast_2d(np.asarray(series, dtype=float))
    window = default_window(s.shape[1]) if window is None else window
    per_rep = s[:, -window:].mean(axis=1)
    if len(per_rep) < 2:
        return 0.0
    return float(per_rep.std(ddof=1) / np.sqrt(len(per_rep)))


@dataclass
class MetricSeries:
    msd_centroid: np.ndarray
    msd_avg: np.ndarray
    disagreement: np.ndarray
    test_error: np.ndarray | None = None

    @classmethod
    def from_trajectory(cls, trajectory: Trajectory, problem: Problem, with_test_error: bool = False):
        te = None
        if with_test_error:
            te = np.array([test_error(problem, w) for w in trajectory.centroids[1:]])
        return cls(
            msd_centroid(trajectory, problem.w_global),
            msd_avg(trajectory, problem.w_global),
            disagreement(trajectory),
            te,
        )

    @property
    def steps(self) -> int:
        return len(self.msd_avg)


def stack(series: list[MetricSeries]) -> MetricSeries:
    """Stack per-replica series into ``(replicas, steps)`` arrays, in list order."""
    te = [s.test_error for s in series]
    return MetricSeries(
        np.stack([s.msd_centroid for s in series]),
        np.stack([s.msd_avg for s in series]),
        np.stack([s.disagreement for s in series]),
        None if any(t is None for t in te) else np.stack(te),
    )


def gradient_noise_moment(problem: Problem, p: int, w, trials: int, rng) -> float:
    """Monte-Carlo ``E ||stochastic grad - full grad||^2`` at ``w``."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    full = full_gradient(problem, p, w)
    idx = rng.integers(problem.N, size=trials)
    u = problem.features[p, idx]
    d = problem.targets[p, idx]
    w = np.asarray(w, dtype=float)
    z = u @ w
    if problem.kind == "ridge_regression":
        coef = -2.0 * (d - z)
    else:
        from scipy.special import expit

        coef = -d * expit(-d * z)
    noise = coef[:, None] * u + 2.0 * problem.rho * w - full
    return float(np.mean(np.einsum("tk,tk->t", noise, noise)))


def fit_gradient_noise_bound(distances, moments) -> tuple[float, float]:
    """Least-squares fit of ``moment ~ beta2 * distance^2 + sigma2``, constrained non-negative."""
    from scipy.optimize import nnls

    d2 = np.asarray(distances, dtype=float) ** 2
    X = np.column_stack([d2, np.ones_like(d2)])
    (beta2, sigma2), _ = nnls(X, np.asarray(moments, dtype=float))
    return float(beta2), float(sigma2)


def test_error(problem: Problem, w, holdout=None) -> float:
    """Misclassification rate of ``sign(u^T w)`` on the held-out set."""
    if problem.kind != "logistic":
        raise ValueError("test error is defined for classification problems")
    u, y = problem.holdout if holdout is None else holdout
    pred = np.where(np.asarray(u) @ np.asarray(w) >= 0, 1.0, -1.0)
    return float(np.mean(pred != y))
