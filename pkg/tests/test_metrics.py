import numpy as np
import pytest

from privlearn.config import ProblemSpec
from privlearn.experiment import build_problem
from privlearn.graph import make_triple
from privlearn.learn import RunConfig, Trajectory, run
from privlearn.metrics import (
    MetricSeries,
    disagreement,
    fit_gradient_noise_bound,
    gradient_noise_moment,
    msd_avg,
    msd_centroid,
    stack,
    steady_state,
    steady_state_stderr,
    test_error as classification_error,
    to_db,
)
from privlearn.objectives import generate_regression, make_problem
from privlearn.privacy.noise import NoisePlan


def traj_of(W, q=None):
    W = np.asarray(W, dtype=float)
    P = W.shape[1]
    return Trajectory(W, np.full(P, 1 / P) if q is None else np.asarray(q), "atc", "none")


class TestMSD:
    def test_frozen_at_optimum(self):
        wo = np.array([1.0, -1.0])
        t = traj_of(np.tile(wo, (6, 3, 1)))
        assert not msd_centroid(t, wo).any() and not msd_avg(t, wo).any()

    def test_zero_models(self):
        t = traj_of(np.zeros((4, 3, 2)))
        np.testing.assert_array_equal(msd_centroid(t, [1.0, 1.0]), [2.0, 2.0, 2.0])
        assert len(msd_avg(t, [1.0, 1.0])) == 3

    def test_converged_run(self, topo30):
        prob = generate_regression(30, 20, 2, np.eye(2), np.zeros(30), np.array([0.5, 1.0]), 0.0, seed=1)
        t = run(RunConfig(1.0 / prob.delta, 800, gradient_mode="full"), make_triple(topo30, "atc"), prob)
        assert msd_centroid(t, prob.w_global)[-1] <= 1e-12

    def test_jensen(self):
        rng = np.random.default_rng(0)
        t = traj_of(rng.normal(size=(10, 5, 3)))
        assert np.all(msd_avg(t, np.zeros(3)) >= msd_centroid(t, np.zeros(3)) - 1e-15)

    def test_decomposition_uniform_q(self):
        rng = np.random.default_rng(1)
        t = traj_of(rng.normal(size=(20, 7, 3)))
        wo = rng.normal(size=3)
        np.testing.assert_allclose(msd_avg(t, wo), msd_centroid(t, wo) + disagreement(t), atol=1e-10)

    def test_disagreement_consensus_and_single(self):
        assert not disagreement(traj_of(np.ones((5, 4, 2)))).any()
        assert not disagreement(traj_of(np.random.default_rng(0).normal(size=(5, 1, 2)))).any()

    def test_db(self):
        np.testing.assert_allclose(to_db([1.0, 0.1, 100.0]), [0.0, -10.0, 20.0])


class TestSteadyState:
    def test_constant(self):
        assert steady_state(np.full(50, 3.5), 10) == 3.5

    def test_full_window(self):
        s = np.arange(10.0)
        assert steady_state(s, 10) == s.mean()

    def test_default_window_is_last_tenth(self):
        s = np.r_[np.zeros(90), np.ones(10)]
        assert steady_state(s) == 1.0

    def test_replica_average_and_order(self):
        s = np.random.default_rng(0).random((6, 40))
        assert steady_state(s, 8) == pytest.approx(s[:, -8:].mean(), rel=1e-14)
        assert steady_state(s[::-1], 8) == pytest.approx(steady_state(s, 8), rel=1e-14)
        assert steady_state_stderr(s, 8) == pytest.approx(s[:, -8:].mean(axis=1).std(ddof=1) / np.sqrt(6))

    def test_window_too_long(self):
        with pytest.raises(ValueError):
            steady_state(np.ones(5), 6)

    def test_paper_run_direct(self, topo30, problem30):
        t = run(RunConfig(0.4, 1000), make_triple(topo30, "atc"), problem30)
        m = msd_avg(t, problem30.w_global)
        direct = np.mean([np.mean(np.sum((t.W[i] - problem30.w_global) ** 2, axis=1)) for i in range(901, 1001)])
        assert steady_state(m, 100) == pytest.approx(direct, rel=1e-12)


@pytest.fixture(scope="module")
def atc(topo30):
    return make_triple(topo30, "atc")


class TestSchemeEffects:
    def _ss(self, atc, problem, plan, reps=4, steps=1000):
        vals = []
        for k in range(reps):
            t = run(RunConfig(0.4, steps, noise_plan=plan), atc, problem, k)
            vals.append(MetricSeries.from_trajectory(t, problem))
        return stack(vals)

    def test_random_raises_msd(self, atc, problem30):
        clean = self._ss(atc, problem30, NoisePlan())
        noisy = self._ss(atc, problem30, NoisePlan("random", 0.01))
        assert steady_state(noisy.msd_avg) > steady_state(clean.msd_avg)

    def test_gh_disagreement_scales_with_noise(self, atc, problem30):
        lo = self._ss(atc, problem30, NoisePlan("graph_homomorphic", 0.01))
        hi = self._ss(atc, problem30, NoisePlan("graph_homomorphic", 0.04))
        ratio = steady_state(hi.disagreement) / steady_state(lo.disagreement)
        assert 3 <= ratio <= 5

    def test_series_nonnegative(self, atc, problem30):
        s = self._ss(atc, problem30, NoisePlan("graph_homomorphic", 0.01), reps=1, steps=200)
        for arr in (s.msd_avg, s.msd_centroid, s.disagreement):
            assert arr.shape == (1, 200) and np.all(arr >= 0) and np.all(np.isfinite(arr))


class TestGradientNoise:
    def test_single_sample(self):
        prob = make_problem("ridge_regression", np.ones((2, 1, 2)), np.ones((2, 1)), 0.1)
        assert gradient_noise_moment(prob, 0, np.array([0.3, 0.1]), 100, np.random.default_rng(0)) == pytest.approx(0, abs=1e-24)

    def test_stable_across_seeds(self, problem30):
        w = problem30.w_local[3]
        vals = [gradient_noise_moment(problem30, 3, w, 10**4, np.random.default_rng(s)) for s in range(5)]
        assert np.isfinite(vals).all()
        assert max(vals) / min(vals) < 1.1

    def test_matches_exact_variance(self, problem30):
        from privlearn.objectives import full_gradient, stochastic_gradient

        p, w = 5, np.array([0.2, -0.4])
        full = full_gradient(problem30, p, w)
        exact = np.mean([
            np.sum((stochastic_gradient(problem30, p, w, _FixedIndex(n)) - full) ** 2) for n in range(problem30.N)
        ])
        est = gradient_noise_moment(problem30, p, w, 10**5, np.random.default_rng(0))
        assert est == pytest.approx(exact, rel=0.03)

    def test_affine_bound_fit(self, problem30):
        rng = np.random.default_rng(1)
        radii = np.linspace(0, 3, 12)
        direction = np.array([0.6, 0.8])
        moments = [gradient_noise_moment(problem30, 0, problem30.w_global + r * direction, 5000, rng) for r in radii]
        beta2, sigma2 = fit_gradient_noise_bound(radii, moments)
        assert beta2 >= 0 and sigma2 >= 0 and beta2 > 0


class _FixedIndex:
    def __init__(self, n):
        self.n = n

    def integers(self, *_args, **_kw):
        return self.n


class TestClassification:
    def test_zero_separation(self):
        prob = build_problem(ProblemSpec(kind="logistic", class_sep=0.0, holdout=4000), 10)
        assert abs(classification_error(prob, np.array([1.0, 0.0])) - 0.5) <= 0.05

    def test_perfect_separator(self):
        u = np.array([[1.0, 0.0], [2.0, 1.0], [-1.0, 0.5], [-3.0, -1.0]])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        prob = make_problem("logistic", u[None], y[None], 0.1, holdout=(u, y))
        assert classification_error(prob, np.array([1.0, 0.0])) == 0.0

    def test_centralized_reference(self):
        prob = build_problem(ProblemSpec(kind="logistic", rho=0.001), 30)
        assert classification_error(prob, prob.w_global) < 0.2

    def test_ridge_rejected(self, problem30):
        with pytest.raises(ValueError):
            classification_error(problem30, np.zeros(2))
