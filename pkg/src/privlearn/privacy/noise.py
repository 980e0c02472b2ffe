"""Link perturbations for the privatised recursion.

A :class:`LinkNoise` holds one array per recursion stage ``j`` with
``stage[j][m, p]`` the length-``M`` noise on the message sent by ``m`` to
receiver ``p`` (the same sender/receiver layout as the combination matrices).
Stages whose matrix is the identity carry no messages and stay zero.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from privlearn.graph import CombinationTriple, Topology

logger = logging.getLogger(__name__)

SCHEMES = ("none", "random", "graph_homomorphic", "local_graph_homomorphic")
GH_VARIANTS = ("paper_eq41", "exact_cancellation")
PARTITION_RULES = ("parity", "alternating")
CONVENTIONS = ("variance_matched", "paper")

# Real-valued key arithmetic: a large prime and a multiple of it.
KEY_PRIME = 2_147_483_647.0
KEY_MULTIPLE = 64 * KEY_PRIME


class DegenerateNeighbourhoodError(ValueError):
    """Receiver has fewer than two other neighbours, so pairwise masks cannot hide its links."""


@dataclass(frozen=True)
class NoisePlan:
    scheme: str = "none"
    sigma_g2: float = 0.0
    gh_variant: str = "paper_eq41"
    partition_rule: str = "alternating"
    convention: str = "variance_matched"
    allow_degenerate: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.sigma_g2 < 0:
            raise ValueError("sigma_g2 must be non-negative")
        if (self.sigma_g2 == 0) != (self.scheme == "none"):
            raise ValueError("sigma_g2 must be zero exactly when the scheme is 'none'")
        if self.gh_variant not in GH_VARIANTS:
            raise ValueError(f"unknown graph-homomorphic variant {self.gh_variant!r}")
        if self.partition_rule not in PARTITION_RULES:
            raise ValueError(f"unknown partition rule {self.partition_rule!r}")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}")


@dataclass
class LinkNoise:
    P: int
    M: int
    stages: list = field(default_factory=lambda: [None, None, None])  # None or (P, P, M)

    def stage(self, j: int) -> np.ndarray:
        g = self.stages[j]
        return np.zeros((self.P, self.P, self.M)) if g is None else g

    def weighted(self, j: int, A: np.ndarray) -> np.ndarray | None:
        """Noise reaching each receiver after weighting: ``sum_m a_mp g_mp``."""
        g = self.stages[j]
        if g is None:
            return None
        return np.einsum("mp,mpk->pk", A, g)


def laplace_sample(sigma_g2: float, rng: np.random.Generator, size=None):
    """Zero-mean Laplace draws with scale ``sqrt(sigma_g2 / 2)``, hence variance ``sigma_g2``."""
    if sigma_g2 <= 0:
        raise ValueError("sigma_g2 must be positive")
    return rng.laplace(0.0, np.sqrt(sigma_g2 / 2.0), size=size)


def _edge_mask(A: np.ndarray) -> np.ndarray:
    mask = A > 0
    np.fill_diagonal(mask, False)
    return mask


# ---------------------------------------------------------------------------
# Independent perturbations
# ---------------------------------------------------------------------------


def random_noise(triple: CombinationTriple, M: int, sigma_g2: float, rng) -> LinkNoise:
    """I.i.d. Laplace noise on every non-self edge of every active stage."""
    P = triple.P
    noise = LinkNoise(P, M)
    for j in triple.active_stages():
        senders, receivers = np.nonzero(_edge_mask(triple.stages[j]))
        G = np.zeros((P, P, M))
        G[senders, receivers] = laplace_sample(sigma_g2, rng, (len(senders), M))
        noise.stages[j] = G
    return noise


# ---------------------------------------------------------------------------
# Graph-homomorphic perturbations
# ---------------------------------------------------------------------------


def _gh_coefficients(A: np.ndarray, q: np.ndarray, variant: str) -> np.ndarray:
    """Scale ``C[p, m]`` so that sender ``p`` puts ``C[p, m] * g_p`` on its link to ``m``."""
    diag = np.diag(A).copy()
    if np.any(diag <= 0):
        raise ValueError("graph-homomorphic noise needs a positive self-weight on every agent")
    out = _edge_mask(A)  # out[p, m]: receiver m listens to sender p
    C = np.zeros_like(A)
    if variant == "paper_eq41":
        if not np.allclose(A, A.T, rtol=0, atol=1e-12):
            raise ValueError("variant paper_eq41 cancels only for symmetric stage matrices")
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(out, A / A.T, 0.0)
        C[out] = ratio[out]
        np.fill_diagonal(C, -(1.0 - diag) / diag)
    elif variant == "exact_cancellation":
        recv_q = np.broadcast_to(q, A.shape)
        C[out] = 1.0 / (recv_q[out] * A[out])
        np.fill_diagonal(C, -out.sum(axis=1) / (q * diag))
    else:
        raise ValueError(f"unknown graph-homomorphic variant {variant!r}")
    return C


def graph_homomorphic_noise(
    triple: CombinationTriple,
    M: int,
    sigma_g2: float,
    variant: str,
    rng,
    _coefficients: dict | None = None,
) -> LinkNoise:
    """One Laplace vector per agent and stage, spread over its outgoing links.

    The construction makes ``sum_{p,m} q_p a_mp g_mp`` vanish for every stage.
    """
    noise = LinkNoise(triple.P, M)
    for j in triple.active_stages():
        if _coefficients is not None and j in _coefficients:
            C = _coefficients[j]
        else:
            C = _gh_coefficients(np.asarray(triple.stages[j]), np.asarray(triple.q), variant)
        g = laplace_sample(sigma_g2, rng, (triple.P, M))
        noise.stages[j] = C[:, :, None] * g[:, None, :]
    return noise


def network_weighted_sum(noise: LinkNoise, triple: CombinationTriple, j: int) -> np.ndarray:
    """``sum_{p,m} q_p a_{j,mp} g_{j,mp}``, the quantity the global scheme cancels."""
    return np.einsum("p,mp,mpk->k", triple.q, triple.stages[j], noise.stage(j))


# ---------------------------------------------------------------------------
# Local graph-homomorphic perturbations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NeighbourhoodPartition:
    receiver: int
    plus: tuple[int, ...]
    minus: tuple[int, ...]

    def pairs(self) -> list[tuple[int, int]]:
        return [(k, l) for k in self.plus for l in self.minus]


def _other_neighbours(topology, p: int) -> list[int]:
    A = topology.weights if isinstance(topology, Topology) else np.asarray(topology)
    return [int(m) for m in np.flatnonzero(A[:, p] > 0) if m != p]


def partition_neighbourhood(topology, p: int, rule: str = "alternating") -> NeighbourhoodPartition:
    """Split the other neighbours of ``p`` into two non-empty disjoint sets.

    ``parity`` puts even-numbered agents in the plus set, counting agents from
    1 as in ``1..P``; ``alternating`` alternates over the sorted neighbours.
    ``topology`` may be a :class:`Topology` or a bare weight matrix.
    """
    others = sorted(_other_neighbours(topology, p))
    if len(others) < 2:
        raise DegenerateNeighbourhoodError(
            f"agent {p} has {len(others)} other neighbour(s); at least 2 are needed"
        )
    if rule == "parity":
        plus = tuple(m for m in others if (m + 1) % 2 == 0)
        minus = tuple(m for m in others if (m + 1) % 2 == 1)
        if not plus or not minus:
            raise ValueError(f"parity rule cannot split neighbours {others} of agent {p}")
    elif rule == "alternating":
        plus, minus = tuple(others[0::2]), tuple(others[1::2])
    else:
        raise ValueError(f"unknown partition rule {rule!r}")
    return NeighbourhoodPartition(p, plus, minus)


def local_gh_pair_noise(
    v_l,
    v_m,
    v_l2,
    v_m2,
    a: float = KEY_MULTIPLE,
    pi_real: float = KEY_PRIME,
    sigma_g2: float = 1.0,
    convention: str = "variance_matched",
):
    """Laplace noise from two uniform keys ``v_l, v_l2`` and two Gamma(2, 1) keys ``v_m, v_m2``.

    ``u = (a exp(-v_l v_m) mod pi) / pi`` is uniform on (0, 1), ``-log u`` is
    Exp(1), and the log-ratio of two such variables is Laplace. Works
    elementwise on arrays.
    """
    if sigma_g2 <= 0:
        raise ValueError("sigma_g2 must be positive")
    u = np.mod(a * np.exp(-np.multiply(v_l, v_m)), pi_real) / pi_real
    u2 = np.mod(a * np.exp(-np.multiply(v_l2, v_m2)), pi_real) / pi_real
    if np.any(u == 0) or np.any(u2 == 0):
        raise ValueError("normalised key is exactly zero; draw fresh keys")
    sigma_g = np.sqrt(sigma_g2)
    if convention == "variance_matched":
        scale = sigma_g / np.sqrt(2.0)
    elif convention == "paper":
        scale = np.sqrt(2.0) / sigma_g
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return scale * np.log(u / u2)


def draw_pair_noise(shape, sigma_g2: float, rng, convention: str = "variance_matched"):
    """Sample fresh keys and map them through :func:`local_gh_pair_noise`."""
    out = np.empty(shape)
    todo = np.ones(shape, dtype=bool)
    while todo.any():
        n = int(todo.sum())
        v_l, v_l2 = rng.random(n), rng.random(n)
        v_m, v_m2 = rng.gamma(2.0, 1.0, n), rng.gamma(2.0, 1.0, n)
        u = np.mod(KEY_MULTIPLE * np.exp(-v_l * v_m), KEY_PRIME)
        u2 = np.mod(KEY_MULTIPLE * np.exp(-v_l2 * v_m2), KEY_PRIME)
        ok = (u > 0) & (u2 > 0)
        vals = local_gh_pair_noise(
            v_l[ok], v_m[ok], v_l2[ok], v_m2[ok], sigma_g2=sigma_g2, convention=convention
        )
        slots = np.flatnonzero(todo)[: ok.sum()]
        out.flat[slots] = vals
        todo.flat[slots] = False
    return out


@dataclass(frozen=True)
class _PairIndex:
    """Flattened (plus sender, minus sender, receiver) triples of one stage."""

    plus: np.ndarray
    minus: np.ndarray
    receiver: np.ndarray
    plus_weight: np.ndarray
    minus_weight: np.ndarray


def _pair_index(A: np.ndarray, partitions: list[NeighbourhoodPartition]) -> _PairIndex:
    ks, ls, ps = [], [], []
    for part in partitions:
        for k, l in part.pairs():
            ks.append(k)
            ls.append(l)
            ps.append(part.receiver)
    ks, ls, ps = (np.asarray(x, dtype=np.int64) for x in (ks, ls, ps))
    return _PairIndex(ks, ls, ps, A[ks, ps], A[ls, ps])


def _local_stage(A: np.ndarray, index: _PairIndex, M: int, sigma_g2, rng, convention):
    P = A.shape[0]
    g = draw_pair_noise((len(index.plus), M), sigma_g2, rng, convention)
    G = np.zeros((P, P, M))
    np.add.at(G, (index.plus, index.receiver), g / index.plus_weight[:, None])
    np.add.at(G, (index.minus, index.receiver), -g / index.minus_weight[:, None])
    return G


def stage_partitions(A: np.ndarray, rule: str, allow_degenerate: bool = False):
    parts = []
    for p in range(A.shape[0]):
        try:
            parts.append(partition_neighbourhood(A, p, rule))
        except DegenerateNeighbourhoodError:
            if not allow_degenerate:
                raise
            logger.warning("agent %d: links left unmasked (fewer than two other neighbours)", p)
    return parts


def local_gh_link_noise(
    topology,
    p: int,
    partition: NeighbourhoodPartition,
    M: int,
    sigma_g2: float,
    rng,
    convention: str = "variance_matched",
) -> np.ndarray:
    """Masks ``(P, M)`` that senders add to their messages for receiver ``p``.

    Row ``k`` is the mask of sender ``k``; the receiver's weighted sum of masks
    ``sum_k a_kp mask_k`` vanishes, and the receiver's own row is zero.
    """
    A = topology.weights if isinstance(topology, Topology) else np.asarray(topology)
    if partition.receiver != p:
        raise ValueError("partition belongs to another receiver")
    G = _local_stage(A, _pair_index(A, [partition]), M, sigma_g2, rng, convention)
    return G[:, p, :]


def local_graph_homomorphic_noise(
    triple: CombinationTriple,
    M: int,
    sigma_g2: float,
    rng,
    rule: str = "alternating",
    convention: str = "variance_matched",
    allow_degenerate: bool = False,
    _index: dict | None = None,
) -> LinkNoise:
    """Pairwise masks cancelling inside every receiver's neighbourhood, all active stages."""
    noise = LinkNoise(triple.P, M)
    for j in triple.active_stages():
        A = np.asarray(triple.stages[j])
        if _index is not None and j in _index:
            index = _index[j]
        else:
            index = _pair_index(A, stage_partitions(A, rule, allow_degenerate))
        noise.stages[j] = _local_stage(A, index, M, sigma_g2, rng, convention)
    return noise


# ---------------------------------------------------------------------------
# Per-run noise source
# ---------------------------------------------------------------------------


@dataclass
class NoiseSource:
    """Draws a fresh :class:`LinkNoise` per iteration for one plan and triple.

    Structural work (coefficients, partitions) is done once at construction.
    """

    plan: NoisePlan
    triple: CombinationTriple
    M: int
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        stages = self.triple.active_stages()
        if self.plan.scheme == "graph_homomorphic":
            for j in stages:
                A = np.asarray(self.triple.stages[j])
                self._cache[j] = _gh_coefficients(A, np.asarray(self.triple.q), self.plan.gh_variant)
        elif self.plan.scheme == "local_graph_homomorphic":
            for j in stages:
                A = np.asarray(self.triple.stages[j])
                parts = stage_partitions(A, self.plan.partition_rule, self.plan.allow_degenerate)
                self._cache[j] = _pair_index(A, parts)

    def draw(self, rng) -> LinkNoise | None:
        plan = self.plan
        if plan.scheme == "none":
            return None
        if plan.scheme == "random":
            return random_noise(self.triple, self.M, plan.sigma_g2, rng)
        if plan.scheme == "graph_homomorphic":
            return graph_homomorphic_noise(
                self.triple, self.M, plan.sigma_g2, plan.gh_variant, rng, _coefficients=self._cache
            )
        return local_graph_homomorphic_noise(
            self.triple,
            self.M,
            plan.sigma_g2,
            rng,
            rule=plan.partition_rule,
            convention=plan.convention,
            allow_degenerate=plan.allow_degenerate,
            _index=self._cache,
        )
