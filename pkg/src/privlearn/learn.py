"""The generalised (privatised) distributed recursion.

One iteration, for every agent ``p``::

    phi_p = sum_m a1_mp (w_m + g1_mp)
    psi_p = sum_m a0_mp (phi_m + g0_mp) - mu * grad J_p(phi_p)
    w_p   = sum_m a2_mp (psi_m + g2_mp)

Consensus, CTA and ATC are the presets where two of the three matrices are
the identity.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from privlearn.graph import CombinationTriple
from privlearn.objectives import Problem, full_gradients, sample_gradients
from privlearn.privacy.noise import LinkNoise, NoisePlan, NoiseSource

DIVERGENCE_LIMIT = 1e12
GRADIENT_MODES = ("stochastic", "full")

# Stream ids mixed into each replica seed; sampling and noise never share a stream.
SAMPLING_STREAM = 0
NOISE_STREAM = 1


class DivergenceError(RuntimeError):
    def __init__(self, iteration: int, scheme: str = ""):
        self.iteration = iteration
        self.scheme = scheme
        where = f" under scheme {scheme!r}" if scheme else ""
        super().__init__(f"recursion diverged at iteration {iteration}{where}")


@dataclass(frozen=True)
class RunConfig:
    mu: float
    steps: int
    preset: str = "atc"
    noise_plan: NoisePlan = field(default_factory=NoisePlan)
    gradient_mode: str = "stochastic"
    seed: int = 0
    replicas: int = 1

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("step size mu must be positive")
        if self.steps < 1 or self.replicas < 1:
            raise ValueError("steps and replicas must be at least 1")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"unknown gradient mode {self.gradient_mode!r}")


def replica_seed(seed: int, replica: int) -> int:
    """Seed of replica ``replica``: the root seed offset by the replica index."""
    return seed + replica


def streams(seed: int, replica: int = 0) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (sampling, noise) generators for one replica."""
    s = replica_seed(seed, replica)
    return (
        np.random.default_rng([s, SAMPLING_STREAM]),
        np.random.default_rng([s, NOISE_STREAM]),
    )


@dataclass
class Trajectory:
    """Stacked models ``W[i]`` for ``i = 0..steps`` (``W[0]`` is the initial state)."""

    W: np.ndarray
    q: np.ndarray
    preset: str
    scheme: str

    @property
    def centroids(self) -> np.ndarray:
        return np.einsum("p,ipk->ik", self.q, self.W)

    @property
    def steps(self) -> int:
        return len(self.W) - 1


def _combine(A: np.ndarray, X: np.ndarray, noise: LinkNoise | None, j: int) -> np.ndarray:
    out = A.T @ X
    if noise is not None and noise.stages[j] is not None:
        out += np.einsum("mp,mpk->pk", A, noise.stages[j])
    return out


def step(
    W: np.ndarray,
    triple: CombinationTriple,
    problem: Problem,
    mu: float,
    link_noise: LinkNoise | None = None,
    sample_idx: np.ndarray | None = None,
) -> np.ndarray:
    """One iteration from ``W_{i-1}`` to ``W_i``.

    ``sample_idx[p]`` picks agent ``p``'s datum for the stochastic gradient;
    ``None`` uses the full local gradient. Identity stages are skipped, which
    keeps the presets bit-identical to their direct forms.
    """
    active = set(triple.active_stages())
    A0, A1, A2 = triple.stages
    phi = _combine(A1, W, link_noise, 1) if 1 in active else W
    if sample_idx is None:
        grad = full_gradients(problem, phi)
    else:
        grad = sample_gradients(problem, phi, sample_idx)
    mixed = _combine(A0, phi, link_noise, 0) if 0 in active else phi
    psi = mixed - mu * grad
    return _combine(A2, psi, link_noise, 2) if 2 in active else psi


def centroid(W: np.ndarray, q) -> np.ndarray:
    """Perron-weighted network average ``sum_p q_p w_p``."""
    return np.asarray(q) @ np.asarray(W)


def run(config: RunConfig, triple: CombinationTriple, problem: Problem, replica: int = 0) -> Trajectory:
    """Iterate :func:`step` from ``W_0 = 0`` with fresh noise every iteration."""
    if config.preset != triple.preset and triple.preset != "custom":
        raise ValueError(f"config preset {config.preset!r} does not match triple {triple.preset!r}")
    if triple.P != problem.P:
        raise ValueError("triple and problem disagree on the number of agents")
    P, M, N = problem.P, problem.M, problem.N
    sampler, noise_rng = streams(config.seed, replica)
    source = NoiseSource(config.noise_plan, triple, M)
    stochastic = config.gradient_mode == "stochastic"

    W = np.zeros((config.steps + 1, P, M))
    for i in range(1, config.steps + 1):
        # Drawn every iteration so paired runs see identical sampling paths.
        idx = sampler.integers(0, N, size=P) if stochastic else None
        noise = source.draw(noise_rng)
        W[i] = step(W[i - 1], triple, problem, config.mu, noise, idx)
        if not np.all(np.abs(W[i]) <= DIVERGENCE_LIMIT):
            raise DivergenceError(i, config.noise_plan.scheme)
    return Trajectory(W, np.asarray(triple.q), triple.preset, config.noise_plan.scheme)
