"""Per-agent risks, synthetic data and gradient oracles.

Two problem kinds are supported, both with an agent-wise ``rho * ||w||^2``
regulariser:

* ``ridge_regression``: loss ``(d - u^T w)^2`` (no 1/2 factor),
* ``logistic``: loss ``log(1 + exp(-y u^T w))`` with labels ``y in {-1, +1}``.

Every agent holds the same number of samples ``N``; data are stored as
arrays ``features[p, n, :]`` and ``targets[p, n]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

KINDS = ("ridge_regression", "logistic")

LOGISTIC_GRAD_TOL = 1e-8
LOGISTIC_MAX_ITER = 500_000


class SingularProblemError(ValueError):
    """The regularised normal equations have no unique solution."""


@dataclass(frozen=True)
class Problem:
    kind: str
    features: np.ndarray
    targets: np.ndarray
    rho: float
    w_global: np.ndarray
    w_local: np.ndarray | None
    nu: float
    delta: float
    w_star: np.ndarray | None = None
    noise_stds: np.ndarray | None = None
    holdout: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def P(self) -> int:
        return self.features.shape[0]

    @property
    def N(self) -> int:
        return self.features.shape[1]

    @property
    def M(self) -> int:
        return self.features.shape[2]

    def risk(self, p: int, w) -> float:
        """Empirical regularised risk ``J_p(w)``."""
        u, d = self.features[p], self.targets[p]
        w = np.asarray(w, dtype=float)
        if self.kind == "ridge_regression":
            loss = np.mean((d - u @ w) ** 2)
        else:
            loss = np.mean(np.logaddexp(0.0, -d * (u @ w)))
        return float(loss + self.rho * w @ w)

    def aggregate_risk(self, w) -> float:
        return float(np.mean([self.risk(p, w) for p in range(self.P)]))


# ---------------------------------------------------------------------------
# Gradient oracles
# ---------------------------------------------------------------------------


def sample_gradients(problem: Problem, W: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Loss gradient of agent ``p`` at ``W[p]`` on its sample ``idx[p]``, all agents at once."""
    rows = np.arange(problem.P)
    u = problem.features[rows, idx]
    d = problem.targets[rows, idx]
    z = np.einsum("pk,pk->p", u, W)
    if problem.kind == "ridge_regression":
        coef = -2.0 * (d - z)
    else:
        coef = -d * expit(-d * z)
    return coef[:, None] * u + 2.0 * problem.rho * W


def full_gradients(problem: Problem, W: np.ndarray) -> np.ndarray:
    """Gradient of ``J_p`` at ``W[p]`` for every agent; ``W`` has shape ``(P, M)``."""
    u, d = problem.features, problem.targets
    z = np.einsum("pnk,pk->pn", u, W)
    if problem.kind == "ridge_regression":
        coef = -2.0 * (d - z)
    else:
        coef = -d * expit(-d * z)
    return np.einsum("pn,pnk->pk", coef, u) / problem.N + 2.0 * problem.rho * W


def full_gradient(problem: Problem, p: int, w) -> np.ndarray:
    W = np.zeros((problem.P, problem.M))
    W[p] = w
    return full_gradients(problem, W)[p]


def aggregate_gradient(problem: Problem, w) -> np.ndarray:
    """Gradient of the uniform average ``(1/P) sum_p J_p`` at ``w``."""
    W = np.broadcast_to(np.asarray(w, dtype=float), (problem.P, problem.M))
    return full_gradients(problem, W).mean(axis=0)


def stochastic_gradient(problem: Problem, p: int, w, rng: np.random.Generator) -> np.ndarray:
    """Gradient at one sample drawn uniformly (with replacement) from agent ``p``."""
    n = rng.integers(problem.N)
    W = np.zeros((problem.P, problem.M))
    W[p] = w
    idx = np.zeros(problem.P, dtype=np.int64)
    idx[p] = n
    return sample_gradients(problem, W, idx)[p]


def hessians(problem: Problem, W: np.ndarray | None = None) -> np.ndarray:
    """Per-agent Hessians ``(P, M, M)``; ridge Hessians do not depend on ``W``."""
    u = problem.features
    eye = 2.0 * problem.rho * np.eye(problem.M)
    if problem.kind == "ridge_regression":
        return 2.0 * np.einsum("pni,pnj->pij", u, u) / problem.N + eye
    if W is None:
        W = np.broadcast_to(problem.w_global, (problem.P, problem.M))
    s = expit(np.einsum("pnk,pk->pn", u, W))
    return np.einsum("pn,pni,pnj->pij", s * (1 - s), u, u) / problem.N + eye


# ---------------------------------------------------------------------------
# Minimisers
# ---------------------------------------------------------------------------


def _moments(features, targets):
    N = features.shape[1]
    R = np.einsum("pni,pnj->pij", features, features) / N
    r = np.einsum("pni,pn->pi", features, targets) / N
    return R, r


def _solve_regularised(R: np.ndarray, r: np.ndarray, rho: float) -> np.ndarray:
    system = R + rho * np.eye(R.shape[0])
    if np.linalg.matrix_rank(system) < R.shape[0]:
        raise SingularProblemError(
            "regularised covariance is rank deficient; increase rho or add samples"
        )
    return np.linalg.solve(system, r)


def ridge_global_minimizer(problem: Problem) -> np.ndarray:
    """Exact ``w^o = (R_u + rho I)^{-1} r_du`` with agent-averaged moments."""
    if problem.kind != "ridge_regression":
        raise ValueError("closed-form minimiser exists only for ridge problems")
    R, r = _moments(problem.features, problem.targets)
    return _solve_regularised(R.mean(axis=0), r.mean(axis=0), problem.rho)


def local_minimizer(problem: Problem, p: int) -> np.ndarray:
    if problem.kind != "ridge_regression":
        if problem.w_local is None:
            raise ValueError("local minimisers not available")
        return problem.w_local[p]
    R, r = _moments(problem.features[p : p + 1], problem.targets[p : p + 1])
    return _solve_regularised(R[0], r[0], problem.rho)


def model_drift(problem: Problem) -> float:
    """Tightest model-drift constant ``max_p ||w^o - w_p^o||``."""
    if problem.w_local is None:
        raise ValueError("local minimisers not available")
    return float(np.max(np.linalg.norm(problem.w_local - problem.w_global, axis=1)))


def _descend(grad, W0: np.ndarray, step: float, tol: float, max_iter: int) -> np.ndarray:
    W = W0.copy()
    for _ in range(max_iter):
        G = grad(W)
        if np.max(np.linalg.norm(np.atleast_2d(G), axis=-1)) <= tol:
            return W
        W -= step * G
    raise RuntimeError(f"gradient descent did not reach gradient norm {tol} in {max_iter} steps")


def _logistic_minimizers(features, targets, rho):
    P, N, M = features.shape
    R, _ = _moments(features, targets)
    # Logistic curvature is at most 1/4 of the feature second moment.
    L_local = np.linalg.eigvalsh(R).max() / 4 + 2 * rho
    L_global = np.linalg.eigvalsh(R.mean(axis=0)).max() / 4 + 2 * rho
    probe = Problem("logistic", features, targets, rho, np.zeros(M), None, 2 * rho, L_local)

    w_global = _descend(
        lambda w: aggregate_gradient(probe, w),
        np.zeros(M),
        1.0 / L_global,
        LOGISTIC_GRAD_TOL,
        LOGISTIC_MAX_ITER,
    )
    w_local = _descend(
        lambda W: full_gradients(probe, W),
        np.zeros((P, M)),
        1.0 / L_local,
        LOGISTIC_GRAD_TOL,
        LOGISTIC_MAX_ITER,
    )
    return w_global, w_local, 2 * rho, L_local


def make_problem(kind, features, targets, rho, **extra) -> Problem:
    """Assemble a problem and fill in its minimisers and curvature constants."""
    if kind not in KINDS:
        raise ValueError(f"unknown problem kind {kind!r}")
    features = np.array(features, dtype=float)
    targets = np.array(targets, dtype=float)
    if features.ndim != 3 or targets.shape != features.shape[:2]:
        raise ValueError("features must be (P, N, M) and targets (P, N)")
    if features.shape[1] < 1:
        raise ValueError("every agent needs at least one sample")
    if rho < 0:
        raise ValueError("rho must be non-negative")
    M = features.shape[2]
    if kind == "ridge_regression":
        R, r = _moments(features, targets)
        w_global = _solve_regularised(R.mean(axis=0), r.mean(axis=0), rho)
        try:
            w_local = np.array([_solve_regularised(R[p], r[p], rho) for p in range(len(R))])
        except SingularProblemError:
            w_local = None  # some agent cannot identify a model on its own data
        eig = np.linalg.eigvalsh(2.0 * (R + rho * np.eye(M)))
        nu, delta = float(eig.min()), float(eig.max())
    else:
        w_global, w_local, nu, delta = _logistic_minimizers(features, targets, rho)
    for a in (features, targets, w_global, w_local):
        if a is not None:
            a.setflags(write=False)
    return Problem(kind, features, targets, float(rho), w_global, w_local, nu, delta, **extra)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


def _cholesky(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T):
        raise ValueError("feature covariance must be a symmetric square matrix")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("feature covariance is not positive definite") from None


def random_covariance(M: int, eig_range: tuple[float, float], rng: np.random.Generator) -> np.ndarray:
    """Random rotation of a diagonal with eigenvalues uniform in ``eig_range``."""
    Q, _ = np.linalg.qr(rng.standard_normal((M, M)))
    return Q @ np.diag(rng.uniform(*eig_range, size=M)) @ Q.T


def generate_regression(
    P: int,
    N: int,
    M: int,
    feature_cov,
    noise_stds,
    w_star,
    rho: float,
    seed: int,
) -> Problem:
    """Linear model ``d = u^T w* + o`` with ``u ~ N(0, R_u)`` and agent-specific noise."""
    L = _cholesky(feature_cov)
    noise_stds = np.broadcast_to(np.asarray(noise_stds, dtype=float), (P,)).copy()
    w_star = np.asarray(w_star, dtype=float)
    if L.shape[0] != M or w_star.shape != (M,):
        raise ValueError("dimension mismatch between M, feature_cov and w_star")
    if np.any(noise_stds < 0):
        raise ValueError("noise standard deviations must be non-negative")
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((P, N, M)) @ L.T
    noise = noise_stds[:, None] * rng.standard_normal((P, N))
    targets = features @ w_star + noise
    return make_problem(
        "ridge_regression", features, targets, rho, w_star=w_star, noise_stds=noise_stds
    )


def perturb_agent(problem: Problem, agent: int = 0, seed: int = 1) -> Problem:
    """Replace one agent's observation noise with a fresh draw (neighbouring dataset)."""
    if problem.kind != "ridge_regression" or problem.w_star is None:
        raise ValueError("perturb_agent needs a generated ridge problem")
    rng = np.random.default_rng(seed)
    targets = np.array(problem.targets)
    u = problem.features[agent]
    targets[agent] = u @ problem.w_star + problem.noise_stds[agent] * rng.standard_normal(problem.N)
    return make_problem(
        problem.kind,
        problem.features,
        targets,
        problem.rho,
        w_star=problem.w_star,
        noise_stds=problem.noise_stds,
    )


def _blobs(size, M, class_sep, direction, rng):
    y = rng.choice([-1.0, 1.0], size=size)
    u = rng.standard_normal(size + (M,)) + (class_sep / 2) * y[..., None] * direction
    return u, y


def generate_logistic(
    P: int,
    N: int,
    M: int,
    class_sep: float,
    noise_stds,
    rho: float,
    seed: int,
    holdout_size: int = 2000,
) -> Problem:
    """Two Gaussian classes at ``+-class_sep/2`` along a random direction.

    Agent ``p`` sees its features corrupted by extra ``N(0, noise_stds[p]^2 I)``
    noise; the held-out set is drawn clean.
    """
    rng = np.random.default_rng(seed)
    noise_stds = np.broadcast_to(np.asarray(noise_stds, dtype=float), (P,)).copy()
    direction = rng.standard_normal(M)
    direction /= np.linalg.norm(direction)
    u, y = _blobs((P, N), M, class_sep, direction, rng)
    u = u + noise_stds[:, None, None] * rng.standard_normal(u.shape)
    holdout = _blobs((holdout_size,), M, class_sep, direction, rng)
    return make_problem("logistic", u, y, rho, noise_stds=noise_stds, holdout=holdout)


def with_rho(problem: Problem, rho: float) -> Problem:
    extra = {k: getattr(problem, k) for k in ("w_star", "noise_stds", "holdout")}
    return make_problem(problem.kind, problem.features, problem.targets, rho, **extra)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def dump_dataset(problem: Problem, path, delimiter: str = ",") -> None:
    """One row per sample: ``p, n, u_1 .. u_M, d``."""
    P, N, M = problem.features.shape
    p_idx, n_idx = np.meshgrid(np.arange(P), np.arange(N), indexing="ij")
    cols = [p_idx.reshape(-1, 1), n_idx.reshape(-1, 1)]
    body = np.hstack([problem.features.reshape(P * N, M), problem.targets.reshape(-1, 1)])
    with open(path, "w") as fh:
        for (p, n), row in zip(np.hstack(cols), body):
            fh.write(delimiter.join([str(p), str(n)] + [repr(float(x)) for x in row]) + "\n")


def load_dataset(path, delimiter: str = ",") -> tuple[np.ndarray, np.ndarray]:
    raw = np.loadtxt(Path(path), delimiter=delimiter, ndmin=2)
    p = raw[:, 0].astype(int)
    n = raw[:, 1].astype(int)
    P, N, M = p.max() + 1, n.max() + 1, raw.shape[1] - 3
    if len(raw) != P * N:
        raise ValueError("every agent must hold the same number of samples")
    features = np.zeros((P, N, M))
    targets = np.zeros((P, N))
    features[p, n] = raw[:, 2:-1]
    targets[p, n] = raw[:, -1]
    return features, targets

