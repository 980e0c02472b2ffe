import logging

import numpy as np
import pytest
from scipy import stats

from conftest import chain_adjacency, random_left_stochastic, star_adjacency
from privlearn.graph import CombinationTriple, make_triple, metropolis_weights, random_connected_graph
from privlearn.privacy.noise import (
    KEY_MULTIPLE,
    KEY_PRIME,
    DegenerateNeighbourhoodError,
    NoisePlan,
    NoiseSource,
    draw_pair_noise,
    graph_homomorphic_noise,
    laplace_sample,
    local_gh_link_noise,
    local_gh_pair_noise,
    local_graph_homomorphic_noise,
    network_weighted_sum,
    partition_neighbourhood,
    random_noise,
)


class TestNoisePlan:
    def test_none_requires_zero(self):
        with pytest.raises(ValueError):
            NoisePlan("none", 0.1)
        with pytest.raises(ValueError):
            NoisePlan("random", 0.0)
        NoisePlan("random", 0.1)

    def test_unknown_fields(self):
        for kwargs in ({"scheme": "gaussian", "sigma_g2": 1.0},
                       {"scheme": "graph_homomorphic", "sigma_g2": 1.0, "gh_variant": "x"},
                       {"scheme": "random", "sigma_g2": 1.0, "convention": "x"}):
            with pytest.raises(ValueError):
                NoisePlan(**kwargs)


class TestLaplace:
    def test_mean(self):
        g = laplace_sample(1.0, np.random.default_rng(0), 10**6)
        assert abs(g.mean()) <= 0.005

    def test_variance(self):
        g = laplace_sample(0.01, np.random.default_rng(1), 10**6)
        assert g.var() == pytest.approx(0.01, rel=0.02)

    def test_median_of_magnitude(self):
        b = np.sqrt(0.5)
        g = laplace_sample(1.0, np.random.default_rng(2), 10**6)
        assert np.mean(np.abs(g) > b * np.log(2)) == pytest.approx(0.5, abs=0.01)

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            laplace_sample(0.0, np.random.default_rng(0))


class TestRandomNoise:
    def test_atc_only_stage_two(self, chain3):
        noise = random_noise(make_triple(chain3, "atc"), 2, 0.1, np.random.default_rng(0))
        assert noise.stages[0] is None and noise.stages[1] is None
        G = noise.stages[2]
        assert np.all(G[[0, 1, 2], [0, 1, 2]] == 0)  # self-links clean
        assert np.all(G[0, 2] == 0) and np.all(G[2, 0] == 0)  # no edge
        assert np.all(G[0, 1] != 0)

    def test_deterministic(self, chain3):
        t = make_triple(chain3, "cta")
        a = random_noise(t, 3, 0.1, np.random.default_rng(5))
        b = random_noise(t, 3, 0.1, np.random.default_rng(5))
        assert np.array_equal(a.stages[1], b.stages[1])

    def test_variance(self):
        t = make_triple(metropolis_weights(np.ones((2, 2), dtype=bool)), "atc")
        G = random_noise(t, 500_000, 0.04, np.random.default_rng(3)).stages[2]
        g = np.concatenate([G[0, 1], G[1, 0]])
        assert abs(g.mean()) < 1e-3
        assert g.var() == pytest.approx(0.04, rel=0.02)


class TestGraphHomomorphic:
    @pytest.mark.parametrize("preset", ["consensus", "cta", "atc"])
    def test_eq41_cancels_on_symmetric(self, topo30, preset):
        t = make_triple(topo30, preset)
        rng = np.random.default_rng(0)
        for _ in range(20):
            noise = graph_homomorphic_noise(t, 2, 0.01, "paper_eq41", rng)
            (j,) = t.active_stages()
            assert np.max(np.abs(network_weighted_sum(noise, t, j))) <= 1e-12

    def test_eq41_rejects_asymmetric(self):
        A = random_left_stochastic(5, np.random.default_rng(1))
        t = CombinationTriple(np.eye(5), np.eye(5), A, preset="atc")
        with pytest.raises(ValueError, match="symmetric"):
            graph_homomorphic_noise(t, 2, 0.1, "paper_eq41", np.random.default_rng(0))

    def test_eq41_fails_to_cancel_when_forced_on_asymmetric(self):
        # Documents why the symmetric precondition exists.
        from privlearn.graph import averaging_weights, random_adjacency
        from privlearn.privacy.noise import _gh_coefficients

        # symmetric support, asymmetric weights
        A = averaging_weights(random_adjacency(8, 0.4, seed=2)).weights
        q = CombinationTriple(np.eye(8), np.eye(8), A).q
        out = (A > 0) & ~np.eye(8, dtype=bool)
        C = np.zeros_like(A)
        C[out] = A[out] / A.T[out]
        np.fill_diagonal(C, -(1 - np.diag(A)) / np.diag(A))
        per_sender = np.einsum("m,pm,pm->p", q, A, C)
        assert np.max(np.abs(per_sender)) > 1e-3
        C_exact = _gh_coefficients(A, q, "exact_cancellation")
        np.testing.assert_allclose(np.einsum("m,pm,pm->p", q, A, C_exact), 0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_exact_per_sender(self, seed):
        rng = np.random.default_rng(seed)
        A = random_left_stochastic(7, rng)
        t = CombinationTriple(np.eye(7), np.eye(7), A, preset="atc")
        noise = graph_homomorphic_noise(t, 3, 0.01, "exact_cancellation", rng)
        G = noise.stages[2]
        per_sender = np.einsum("m,pm,pmk->pk", t.q, A, G)
        assert np.max(np.abs(per_sender)) <= 1e-12
        assert np.max(np.abs(network_weighted_sum(noise, t, 2))) <= 1e-12

    def test_single_agent_zero(self):
        t = CombinationTriple(np.eye(1), np.eye(1), np.ones((1, 1)), preset="atc")
        for variant in ("paper_eq41", "exact_cancellation"):
            G = graph_homomorphic_noise(t, 4, 1.0, variant, np.random.default_rng(0)).stages
            assert all(g is None or not g.any() for g in G)

    def test_one_draw_per_sender(self, chain3):
        t = make_triple(chain3, "atc")
        G = graph_homomorphic_noise(t, 2, 0.1, "paper_eq41", np.random.default_rng(0)).stages[2]
        A = chain3.weights
        # every outgoing link of sender 1 carries the same base draw, rescaled
        base = G[1, 0] / (A[1, 0] / A[0, 1])
        np.testing.assert_allclose(G[1, 2] / (A[1, 2] / A[2, 1]), base)
        np.testing.assert_allclose(G[1, 1], -(1 - A[1, 1]) / A[1, 1] * base)


class TestPartition:
    def test_paper_star_parity(self):
        # agent 1 with neighbours 2..6 (1-based), as in the paper's star example
        A = metropolis_weights(star_adjacency(6)).weights
        part = partition_neighbourhood(A, 0, "parity")
        assert [m + 1 for m in part.plus] == [2, 4, 6]
        assert [m + 1 for m in part.minus] == [3, 5]
        assert (1, 2) in part.pairs() and (1, 4) in part.pairs()  # agent 2 pairs with 3 and 5

    def test_same_parity(self):
        adj = np.eye(5, dtype=bool)
        for m in (1, 3):  # 1-based labels 2 and 4
            adj[0, m] = adj[m, 0] = True
        adj[1, 2] = adj[2, 1] = adj[3, 4] = adj[4, 3] = True
        A = metropolis_weights(adj).weights
        with pytest.raises(ValueError):
            partition_neighbourhood(A, 0, "parity")
        part = partition_neighbourhood(A, 0, "alternating")
        assert part.plus == (1,) and part.minus == (3,)

    def test_single_neighbour(self, chain3):
        with pytest.raises(DegenerateNeighbourhoodError):
            partition_neighbourhood(chain3, 0)

    def test_partition_is_disjoint_cover(self, topo30):
        for p in range(30):
            part = partition_neighbourhood(topo30, p)
            others = set(topo30.others(p))
            assert set(part.plus) | set(part.minus) == others
            assert not set(part.plus) & set(part.minus)
            assert part.plus and part.minus


class TestPairNoise:
    def test_identical_keys(self):
        assert local_gh_pair_noise(0.3, 1.7, 0.3, 1.7, sigma_g2=2.0) == 0.0

    def test_scales(self):
        args = (0.2, 1.1, 0.7, 2.5)
        vm = local_gh_pair_noise(*args, sigma_g2=4.0, convention="variance_matched")
        pp = local_gh_pair_noise(*args, sigma_g2=4.0, convention="paper")
        # sigma_g = 2: scales are sqrt(2) and 1/sqrt(2)
        assert pp / vm == pytest.approx(0.5)

    def test_zero_key_rejected(self):
        with pytest.raises(ValueError):
            local_gh_pair_noise(0.0, 1.0, 0.5, 1.0, a=KEY_PRIME)  # exp(0) * pi mod pi == 0

    def test_variance_matched_moments(self):
        g = draw_pair_noise(10**6, 1.0, np.random.default_rng(0))
        assert abs(g.mean()) < 0.005
        assert g.var() == pytest.approx(1.0, rel=0.02)

    def test_paper_convention_variance(self):
        g = draw_pair_noise(10**6, 0.5, np.random.default_rng(1), convention="paper")
        # Laplace(0, sqrt(2)/sigma_g) has variance 4 / sigma_g^2
        assert g.var() == pytest.approx(4 / 0.5, rel=0.02)

    def test_ks_laplace(self):
        sigma_g2 = 0.01
        g = draw_pair_noise(10**6, sigma_g2, np.random.default_rng(2))
        res = stats.kstest(g, stats.laplace(scale=np.sqrt(sigma_g2 / 2)).cdf)
        assert res.statistic < 0.01

    def test_key_constants(self):
        assert KEY_MULTIPLE == 64 * KEY_PRIME


class TestLocalLinkNoise:
    def test_paper_star_cancels(self):
        topo = metropolis_weights(star_adjacency(6))
        A = topo.weights
        part = partition_neighbourhood(topo, 0, "parity")
        rng = np.random.default_rng(0)
        W = rng.normal(size=(6, 3))
        masks = local_gh_link_noise(topo, 0, part, 3, 0.5, rng)
        assert not masks[0].any()
        received = A[:, 0] @ (W + masks)
        np.testing.assert_allclose(received, A[:, 0] @ W, atol=1e-10)

    def test_single_pair_masks(self):
        # receiver 0 with exactly two other neighbours
        topo = metropolis_weights(star_adjacency(3))
        A = topo.weights
        part = partition_neighbourhood(topo, 0)
        masks = local_gh_link_noise(topo, 0, part, 4, 1.0, np.random.default_rng(3))
        np.testing.assert_allclose(A[1, 0] * masks[1], -A[2, 0] * masks[2], atol=1e-14)

    def test_deterministic(self):
        topo = metropolis_weights(star_adjacency(6))
        part = partition_neighbourhood(topo, 0)
        a = local_gh_link_noise(topo, 0, part, 2, 1.0, np.random.default_rng(9))
        b = local_gh_link_noise(topo, 0, part, 2, 1.0, np.random.default_rng(9))
        assert np.array_equal(a, b)

    def test_full_stage_cancels_per_receiver(self, topo30):
        t = make_triple(topo30, "atc")
        noise = local_graph_homomorphic_noise(t, 2, 0.01, np.random.default_rng(0))
        assert np.max(np.abs(noise.weighted(2, topo30.weights))) <= 1e-10
        assert not np.any(noise.stages[2][np.arange(30), np.arange(30)])

    def test_degenerate_default_error(self, chain3):
        with pytest.raises(DegenerateNeighbourhoodError):
            local_graph_homomorphic_noise(make_triple(chain3, "atc"), 1, 0.1, np.random.default_rng(0))

    def test_degenerate_override_warns(self, chain3, caplog):
        t = make_triple(chain3, "atc")
        with caplog.at_level(logging.WARNING):
            noise = local_graph_homomorphic_noise(t, 1, 0.1, np.random.default_rng(0), allow_degenerate=True)
        assert "unmasked" in caplog.text
        # receiver 1 has two other neighbours and is still masked
        assert np.abs(noise.weighted(2, chain3.weights)).max() <= 1e-12


class TestNoiseSource:
    @pytest.mark.parametrize("scheme", ["random", "graph_homomorphic", "local_graph_homomorphic"])
    def test_matches_direct_functions(self, topo30, scheme):
        t = make_triple(topo30, "atc")
        src = NoiseSource(NoisePlan(scheme, 0.01), t, 2)
        direct = {
            "random": lambda r: random_noise(t, 2, 0.01, r),
            "graph_homomorphic": lambda r: graph_homomorphic_noise(t, 2, 0.01, "paper_eq41", r),
            "local_graph_homomorphic": lambda r: local_graph_homomorphic_noise(t, 2, 0.01, r),
        }[scheme]
        a = src.draw(np.random.default_rng(4))
        b = direct(np.random.default_rng(4))
        assert np.array_equal(a.stages[2], b.stages[2])

    def test_none(self, topo30):
        assert NoiseSource(NoisePlan(), make_triple(topo30, "atc"), 2).draw(np.random.default_rng(0)) is None


def test_random_topologies_are_locally_maskable():
    for seed in range(10):
        topo = random_connected_graph(20, 0.2, seed, min_degree=2)
        for p in range(20):
            partition_neighbourhood(topo, p)
