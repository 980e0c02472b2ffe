"""Graph topologies, combination matrices and their spectral diagnostics.

Agents are indexed ``0..P-1``. A combination matrix ``A`` is stored with
entry ``A[m, p]`` equal to the weight receiver ``p`` applies to messages from
sender ``m``, so every column sums to one (left-stochastic).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

STOCHASTIC_TOL = 1e-12
PERRON_TOL = 1e-12
PERRON_MAX_ITER = 100_000

PRESETS = ("consensus", "cta", "atc")


class GraphError(ValueError):
    """Invalid topology or combination matrix."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_square_nonnegative(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise GraphError(f"combination matrix must be square, got shape {A.shape}")
    if np.any(A < 0):
        raise GraphError("combination matrix has negative entries")
    return A


def is_left_stochastic(A: np.ndarray, tol: float = STOCHASTIC_TOL) -> bool:
    A = np.asarray(A, dtype=float)
    return bool(np.all(A >= 0) and np.allclose(A.sum(axis=0), 1.0, rtol=0, atol=tol))


@dataclass(frozen=True)
class Topology:
    """A weighted agent network.

    ``neighbours[p]`` lists the agents whose messages ``p`` combines (always
    including ``p`` itself); ``weights`` is the left-stochastic matrix ``A``.
    """

    weights: np.ndarray
    neighbours: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        A = _check_square_nonnegative(self.weights)
        P = A.shape[0]
        nbrs = tuple(tuple(int(m) for m in np.flatnonzero(A[:, p] > 0)) for p in range(P))
        if self.neighbours and tuple(tuple(sorted(n)) for n in self.neighbours) != nbrs:
            raise GraphError("neighbour sets disagree with the weight support")
        if not np.allclose(A.sum(axis=0), 1.0, rtol=0, atol=STOCHASTIC_TOL):
            raise GraphError("columns of the combination matrix must sum to 1")
        if np.any(np.diag(A) <= 0):
            raise GraphError("every agent needs a positive self-weight")
        if not is_primitive(A):
            raise GraphError("combination matrix is not primitive (graph not strongly connected)")
        object.__setattr__(self, "weights", _frozen(A))
        object.__setattr__(self, "neighbours", nbrs)

    @property
    def P(self) -> int:
        return self.weights.shape[0]

    @property
    def adjacency(self) -> np.ndarray:
        return self.weights > 0

    def others(self, p: int) -> tuple[int, ...]:
        """Neighbours of ``p`` excluding ``p``."""
        return tuple(m for m in self.neighbours[p] if m != p)

    def is_symmetric(self, tol: float = STOCHASTIC_TOL) -> bool:
        return bool(np.allclose(self.weights, self.weights.T, rtol=0, atol=tol))


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------


def _check_adjacency(adjacency) -> np.ndarray:
    adj = np.asarray(adjacency, dtype=bool)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise GraphError(f"adjacency must be square, got shape {adj.shape}")
    if not np.all(np.diag(adj)):
        raise GraphError("adjacency must contain every self-loop")
    return adj


def metropolis_weights(adjacency) -> Topology:
    """Symmetric, doubly stochastic Metropolis weights.

    ``a_mp = 1/max(|N_m|, |N_p|)`` on edges, self-weight takes the remainder.
    Degrees count the self-loop.
    """
    adj = _check_adjacency(adjacency)
    if not np.array_equal(adj, adj.T):
        raise GraphError("Metropolis weights need a symmetric adjacency")
    deg = adj.sum(axis=0).astype(float)
    A = np.where(adj, 1.0 / np.maximum.outer(deg, deg), 0.0)
    np.fill_diagonal(A, 0.0)
    np.fill_diagonal(A, 1.0 - A.sum(axis=0))
    return Topology(A)


def averaging_weights(adjacency) -> Topology:
    """Uniform weights ``a_mp = 1/|N_p|``; left- but generally not doubly stochastic."""
    adj = _check_adjacency(adjacency)
    A = adj / adj.sum(axis=0, keepdims=True)
    return Topology(A)


WEIGHT_RULES = {"metropolis": metropolis_weights, "averaging": averaging_weights}


def _components(adj: np.ndarray) -> list[list[int]]:
    P = adj.shape[0]
    seen = np.zeros(P, dtype=bool)
    comps = []
    for start in range(P):
        if seen[start]:
            continue
        comp, frontier = [start], [start]
        seen[start] = True
        while frontier:
            nxt = []
            for v in frontier:
                for w in np.flatnonzero(adj[v] & ~seen):
                    seen[w] = True
                    nxt.append(int(w))
            comp.extend(nxt)
            frontier = nxt
        comps.append(comp)
    return comps


def random_adjacency(P: int, edge_density: float, seed: int, min_degree: int = 1) -> np.ndarray:
    """Erdos-Renyi skeleton, joined into one component by a chain of extra edges.

    ``min_degree`` counts neighbours other than the agent itself; agents below
    it receive extra random edges (capped at ``P - 1``).
    """
    if P < 1:
        raise GraphError("need at least one agent")
    if not 0 < edge_density <= 1:
        raise GraphError("edge_density must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((P, P)) < edge_density, k=1)
    adj = upper | upper.T
    np.fill_diagonal(adj, True)

    comps = _components(adj)
    if len(comps) > 1:
        order = rng.permutation(len(comps))
        for a, b in zip(order[:-1], order[1:]):
            u = comps[a][rng.integers(len(comps[a]))]
            v = comps[b][rng.integers(len(comps[b]))]
            adj[u, v] = adj[v, u] = True

    target = min(min_degree, P - 1)
    for p in range(P):
        while adj[p].sum() - 1 < target:
            candidates = np.flatnonzero(~adj[p])
            m = int(rng.choice(candidates))
            adj[p, m] = adj[m, p] = True
    return adj


def random_connected_graph(
    P: int,
    edge_density: float,
    seed: int,
    rule: str = "metropolis",
    min_degree: int = 1,
) -> Topology:
    """Random connected topology with self-loops, deterministic in ``seed``."""
    try:
        make = WEIGHT_RULES[rule]
    except KeyError:
        raise GraphError(f"unknown weight rule {rule!r}") from None
    return make(random_adjacency(P, edge_density, seed, min_degree=min_degree))


# ---------------------------------------------------------------------------
# Spectral diagnostics
# ---------------------------------------------------------------------------


def is_primitive(A) -> bool:
    """True iff some power ``A^k`` with ``k <= P^2 - 2P + 2`` is entrywise positive."""
    A = _check_square_nonnegative(A)
    P = A.shape[0]
    bound = P * P - 2 * P + 2
    B = (A > 0).astype(np.int64)
    power = 1
    # Boolean repeated squaring; positivity persists once reached because no
    # column of a stochastic matrix is zero.
    while power < bound:
        B = np.minimum(B @ B, 1)
        power *= 2
    return bool(np.all(B > 0))


def perron_vector(A, tol: float = PERRON_TOL, max_iter: int = PERRON_MAX_ITER) -> np.ndarray:
    """Positive fixed vector ``q`` of a primitive left-stochastic ``A``, summing to 1.

    Computed by normalised power iteration ``q <- A q / 1^T A q``.
    """
    A = _check_square_nonnegative(A)
    if not is_primitive(A):
        raise GraphError("Perron vector requested for a non-primitive matrix")
    P = A.shape[0]
    q = np.full(P, 1.0 / P)
    for _ in range(max_iter):
        nxt = A @ q
        nxt /= nxt.sum()
        if np.linalg.norm(A @ nxt - nxt) <= tol:
            return nxt
        q = nxt
    raise GraphError(f"power iteration did not reach tol={tol} within {max_iter} iterations")


def jordan_gap(A, q) -> float:
    """Spectral radius of ``A - q 1^T``.

    Uses the power method on the deflated matrix itself, squaring it repeatedly
    and reading ``||B^n||^(1/n)`` in log scale, which is robust to
    complex-conjugate or sign-alternating dominant eigenvalues.
    """
    A = np.asarray(A, dtype=float)
    q = np.asarray(q, dtype=float)
    B = A - np.outer(q, np.ones(A.shape[0]))
    nrm = np.linalg.norm(B, 2)
    if nrm == 0.0:
        return 0.0
    # invariant: B^(2^k) = C * exp(log_scale)
    C, log_scale = B / nrm, np.log(nrm)
    n = 1
    for _ in range(48):
        C = C @ C
        log_scale *= 2
        n *= 2
        nrm = np.linalg.norm(C, 2)
        if nrm == 0.0 or not np.isfinite(nrm):
            return 0.0
        C /= nrm
        log_scale += np.log(nrm)
    return float(np.exp(log_scale / n))


# ---------------------------------------------------------------------------
# Combination triples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CombinationTriple:
    """Matrices ``A0, A1, A2`` of the generalised recursion and the Perron vector
    ``q`` of ``A1 @ A0 @ A2``."""

    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    preset: str = "custom"
    q: np.ndarray = field(default=None)

    def __post_init__(self):
        mats = []
        for name in ("A0", "A1", "A2"):
            M = _check_square_nonnegative(getattr(self, name))
            if not is_left_stochastic(M):
                raise GraphError(f"{name} is not left-stochastic")
            mats.append(M)
        if len({M.shape for M in mats}) != 1:
            raise GraphError("A0, A1, A2 must share one shape")
        for name, M in zip(("A0", "A1", "A2"), mats):
            object.__setattr__(self, name, _frozen(M))
        q = perron_vector(mats[1] @ mats[0] @ mats[2]) if self.q is None else self.q
        object.__setattr__(self, "q", _frozen(q))
        eye = np.eye(mats[0].shape[0])
        active = tuple(j for j, M in enumerate(mats) if not np.array_equal(M, eye))
        object.__setattr__(self, "_active", active)

    @property
    def P(self) -> int:
        return self.A0.shape[0]

    @property
    def stages(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stage matrices indexed by recursion stage ``j = 0, 1, 2``."""
        return (self.A0, self.A1, self.A2)

    def active_stages(self) -> tuple[int, ...]:
        """Stages whose matrix is not the identity, i.e. where messages cross edges."""
        return self._active

    @property
    def product(self) -> np.ndarray:
        return self.A1 @ self.A0 @ self.A2


def make_triple(topology: Topology, preset: str) -> CombinationTriple:
    """Consensus (``A0 = A``), CTA (``A1 = A``) or ATC (``A2 = A``); the others are ``I``."""
    A = np.asarray(topology.weights)
    eye = np.eye(topology.P)
    if preset == "consensus":
        mats = (A, eye, eye)
    elif preset == "cta":
        mats = (eye, A, eye)
    elif preset == "atc":
        mats = (eye, eye, A)
    else:
        raise GraphError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    return CombinationTriple(*mats, preset=preset, q=perron_vector(A))


# ---------------------------------------------------------------------------
# Plain-text serialisation
# ---------------------------------------------------------------------------


def dump_topology(topology: Topology, path) -> None:
    """Write ``P`` then one ``m p a_mp`` row per nonzero weight (0-based indices)."""
    A = topology.weights
    lines = [str(topology.P)]
    for m, p in zip(*np.nonzero(A)):
        lines.append(f"{m} {p} {float(A[m, p])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_topology(path) -> Topology:
    rows = Path(path).read_text().split("\n")
    P = int(rows[0])
    A = np.zeros((P, P))
    for row in rows[1:]:
        if row.strip():
            m, p, a = row.split()
            A[int(m), int(p)] = float(a)
    return Topology(A)
