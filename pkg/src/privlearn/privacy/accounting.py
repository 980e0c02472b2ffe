"""Privacy accounting: the linear epsilon budget, measured sensitivity and
Gaussian mutual information."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def epsilon_budget(i: int, P: int, sigma_g2: float, B: float, B_prime: float, model_gap: float) -> float:
    """Upper bound ``(sqrt(2) P / sigma_g) (B + B' + sqrt(P) gap) i``.

    Returns ``math.inf`` when no noise is added.
    """
    if i < 0 or P < 1:
        raise ValueError("need i >= 0 and P >= 1")
    if B <= 0 or B_prime <= 0 or model_gap < 0 or sigma_g2 < 0:
        raise ValueError("B, B' must be positive and model_gap, sigma_g2 non-negative")
    if sigma_g2 == 0:
        return math.inf
    return math.sqrt(2.0) * P / math.sqrt(sigma_g2) * sensitivity_bound(P, B, B_prime, model_gap) * i


def sensitivity_bound(P: int, B: float, B_prime: float, model_gap: float) -> float:
    return B + B_prime + math.sqrt(P) * model_gap


def epsilon_from_deltas(deltas, P: int, sigma_g2: float) -> np.ndarray:
    """Running ``eps(i) = (sqrt(2) P / sigma_g) sum_{j<i} Delta(j)``, for ``i = 0..len(deltas)``."""
    deltas = np.asarray(deltas, dtype=float)
    if sigma_g2 <= 0:
        return np.full(len(deltas) + 1, math.inf)
    csum = np.concatenate([[0.0], np.cumsum(deltas)])
    return math.sqrt(2.0) * P / math.sqrt(sigma_g2) * csum


@dataclass(frozen=True)
class PrivacyLedger:
    P: int
    sigma_g2: float
    B: float
    B_prime: float
    model_gap: float
    epsilon_series: np.ndarray
    delta_series: np.ndarray | None = None

    def __post_init__(self):
        eps = np.asarray(self.epsilon_series)
        if np.any(np.diff(eps) < 0):
            raise ValueError("epsilon series must be non-decreasing")

    @classmethod
    def build(cls, P, sigma_g2, B, B_prime, model_gap, i_max, deltas=None) -> "PrivacyLedger":
        eps = np.array([epsilon_budget(i, P, sigma_g2, B, B_prime, model_gap) for i in range(i_max + 1)])
        return cls(P, sigma_g2, B, B_prime, model_gap, eps, None if deltas is None else np.asarray(deltas))

    @property
    def bound(self) -> float:
        return sensitivity_bound(self.P, self.B, self.B_prime, self.model_gap)

    def violation_rate(self) -> float:
        """Fraction of recorded ``Delta(i)`` exceeding ``B + B' + sqrt(P) gap``."""
        if self.delta_series is None:
            raise ValueError("no measured sensitivities in this ledger")
        return float(np.mean(np.asarray(self.delta_series) > self.bound))


def empirical_sensitivity(problem, problem_prime, config, triple, replica: int = 0) -> np.ndarray:
    """``Delta(i) = ||W_i - W'_i||`` for ``i = 0..steps`` under shared randomness.

    Both runs use the same replica seed, so gradient samples and link noise
    coincide and only the swapped dataset separates the trajectories.
    """
    from privlearn.learn import run

    if problem.features.shape[0] != problem_prime.features.shape[0] or problem.M != problem_prime.M:
        raise ValueError("paired problems must share P and M")
    if problem.N != problem_prime.N:
        raise ValueError("paired problems must share the per-agent sample count")
    a = run(config, triple, problem, replica=replica)
    b = run(config, triple, problem_prime, replica=replica)
    return np.linalg.norm((a.W - b.W).reshape(len(a.W), -1), axis=1)


def mutual_information_gaussian(sigma_w2: float, sigma_g2: float) -> float:
    """``0.5 ln(1 + sigma_w^2 / sigma_g^2)`` in nats."""
    if sigma_g2 <= 0 or sigma_w2 < 0:
        raise ValueError("need sigma_g2 > 0 and sigma_w2 >= 0")
    return 0.5 * math.log1p(sigma_w2 / sigma_g2)
