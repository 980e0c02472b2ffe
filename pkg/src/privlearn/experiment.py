"""Build problems from configs and run replicated experiments.

Replicas are independent; with ``jobs > 1`` they run in worker processes and
results are merged in replica-index order, so output never depends on
scheduling. Only per-iteration metric series leave a worker, never the full
model history.
"""
from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from privlearn.config import AUTO, ExperimentConfig, GraphSpec, PrivacySpec, ProblemSpec, SchemeSpec
from privlearn.graph import CombinationTriple, Topology, make_triple, random_connected_graph
from privlearn.learn import RunConfig, run
from privlearn.metrics import MetricSeries, stack, steady_state, steady_state_stderr
from privlearn.objectives import Problem, generate_logistic, generate_regression, perturb_agent, random_covariance
from privlearn.privacy.accounting import PrivacyLedger, empirical_sensitivity


def build_topology(spec: GraphSpec) -> Topology:
    return random_connected_graph(spec.P, spec.density, spec.seed, rule=spec.rule, min_degree=spec.min_degree)


def build_problem(spec: ProblemSpec, P: int) -> Problem:
    """Synthetic instance; every random choice flows from ``spec.seed``."""
    rng = np.random.default_rng([spec.seed, 99])
    noise_stds = rng.uniform(*spec.noise_std, size=P)
    if spec.kind == "logistic":
        return generate_logistic(
            P, spec.N, spec.M, spec.class_sep, noise_stds, spec.rho, seed=spec.seed, holdout_size=spec.holdout
        )
    cov = random_covariance(spec.M, spec.feature_eigs, rng)
    w_star = rng.standard_normal(spec.M)
    return generate_regression(P, spec.N, spec.M, cov, noise_stds, w_star, spec.rho, seed=spec.seed)


def run_config(cfg: ExperimentConfig, scheme: SchemeSpec, **overrides) -> RunConfig:
    r = cfg.run
    base = RunConfig(
        mu=r.mu,
        steps=r.steps,
        preset=r.preset,
        noise_plan=scheme.plan(),
        gradient_mode=r.gradient_mode,
        seed=r.seed,
        replicas=r.replicas,
    )
    return dataclasses.replace(base, **overrides)


def _replica_metrics(args) -> MetricSeries:
    config, triple, problem, replica, with_test_error = args
    traj = run(config, triple, problem, replica=replica)
    return MetricSeries.from_trajectory(traj, problem, with_test_error=with_test_error)


def _map(fn, tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        # map preserves task order regardless of completion order
        return list(pool.map(fn, tasks))


def replicate(
    config: RunConfig,
    triple: CombinationTriple,
    problem: Problem,
    jobs: int = 1,
    with_test_error: bool | None = None,
) -> MetricSeries:
    """Metric series of every replica, stacked as ``(replicas, steps)``."""
    if with_test_error is None:
        with_test_error = problem.kind == "logistic"
    tasks = [(config, triple, problem, k, with_test_error) for k in range(config.replicas)]
    return stack(_map(_replica_metrics, tasks, jobs))


@dataclass(frozen=True)
class SchemeResult:
    scheme: str
    preset: str
    mean: MetricSeries  # replica-averaged curves
    steady: dict  # steady-state summary values

    @classmethod
    def from_stacked(cls, scheme: str, preset: str, stacked: MetricSeries, window: int | None):
        mean = MetricSeries(
            stacked.msd_centroid.mean(axis=0),
            stacked.msd_avg.mean(axis=0),
            stacked.disagreement.mean(axis=0),
            None if stacked.test_error is None else stacked.test_error.mean(axis=0),
        )
        steady = {
            "ss_msd_centroid": steady_state(stacked.msd_centroid, window),
            "ss_msd_avg": steady_state(stacked.msd_avg, window),
            "ss_disagreement": steady_state(stacked.disagreement, window),
            "stderr_msd_centroid": steady_state_stderr(stacked.msd_centroid, window),
        }
        if stacked.test_error is not None:
            steady["ss_test_error"] = steady_state(stacked.test_error, window)
        return cls(scheme, preset, mean, steady)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> list[SchemeResult]:
    topology = build_topology(cfg.graph)
    triple = make_triple(topology, cfg.run.preset)
    problem = build_problem(cfg.problem, topology.P)
    results = []
    for scheme in cfg.schemes:
        rc = run_config(cfg, scheme)
        stacked = replicate(rc, triple, problem, jobs)
        results.append(SchemeResult.from_stacked(scheme.scheme, rc.preset, stacked, cfg.run.window))
    return results


@dataclass(frozen=True)
class SweepRow:
    scheme: str
    preset: str
    param_name: str
    param_value: float
    steady: dict


def run_sweep(cfg: ExperimentConfig, jobs: int = 1) -> list[SweepRow]:
    if cfg.sweep is None:
        raise ValueError("config has no sweep section")
    sw = cfg.sweep
    topology = build_topology(cfg.graph)
    triple = make_triple(topology, cfg.run.preset)
    problem = build_problem(cfg.problem, topology.P)
    steps = sw.steps if sw.steps is not None else cfg.run.steps
    window = cfg.run.window if sw.steps is None else None
    rows = []
    for scheme in cfg.schemes:
        for value in sw.values:
            if sw.param == "mu":
                rc = run_config(cfg, scheme, mu=float(value), steps=steps)
            else:
                rc = run_config(cfg, dataclasses.replace(scheme, sigma_g2=float(value)), steps=steps)
            stacked = replicate(rc, triple, problem, jobs)
            res = SchemeResult.from_stacked(scheme.scheme, rc.preset, stacked, window)
            rows.append(SweepRow(scheme.scheme, rc.preset, sw.param, float(value), res.steady))
    return rows


def _paired_deltas(args) -> np.ndarray:
    config, triple, problem, problem_prime, replica = args
    return empirical_sensitivity(problem, problem_prime, config, triple, replica=replica)


def run_privacy(cfg: ExperimentConfig, jobs: int = 1) -> PrivacyLedger:
    """Linear epsilon budget, plus measured sensitivities when an agent is paired.

    ``auto`` bounds come from the paired runs: ``B`` and ``B'`` are
    ``rms_factor`` times the steady-state RMS of ``||W_i - 1 (x) w^o||`` on each
    problem, and the gap is ``||w^o - w'^o||``.
    """
    pv: PrivacySpec = cfg.privacy
    if pv is None:
        raise ValueError("config has no privacy section")
    topology = build_topology(cfg.graph)
    triple = make_triple(topology, cfg.run.preset)
    P = topology.P
    plan = pv.scheme.plan()
    deltas = None
    B, B_prime, gap = pv.B, pv.B_prime, pv.model_gap
    if pv.paired_agent is not None:
        problem = build_problem(cfg.problem, P)
        problem_prime = perturb_agent(problem, pv.paired_agent, seed=pv.pair_seed)
        rc = run_config(cfg, pv.scheme, steps=max(pv.i_max, 1), replicas=pv.replicas)
        if gap == AUTO:
            gap = float(np.linalg.norm(problem.w_global - problem_prime.w_global))
        if AUTO in (B, B_prime):
            rms = [
                np.sqrt(P * steady_state(replicate(rc, triple, prob, jobs, with_test_error=False).msd_avg))
                for prob in (problem, problem_prime)
            ]
            B = pv.rms_factor * rms[0] if B == AUTO else B
            B_prime = pv.rms_factor * rms[1] if B_prime == AUTO else B_prime
        tasks = [(rc, triple, problem, problem_prime, k) for k in range(pv.replicas)]
        per_replica = np.stack(_map(_paired_deltas, tasks, jobs))
        deltas = per_replica.mean(axis=0)[: pv.i_max + 1]
    return PrivacyLedger.build(P, plan.sigma_g2, B, B_prime, gap, pv.i_max, deltas=deltas)

