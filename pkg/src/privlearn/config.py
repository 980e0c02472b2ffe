"""YAML experiment configuration with strict, path-aware validation.

Every section maps onto a frozen dataclass. Unknown keys, wrong types and
out-of-range values raise :class:`ConfigError` whose message starts with the
dotted field path, e.g. ``graph.density: must lie in (0, 1]``.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from privlearn.graph import PRESETS, WEIGHT_RULES
from privlearn.learn import GRADIENT_MODES
from privlearn.objectives import KINDS
from privlearn.privacy.noise import NoisePlan

AUTO = "auto"


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class GraphSpec:
    P: int = 30
    density: float = 0.2
    rule: str = "metropolis"
    seed: int = 0
    min_degree: int = 1


@dataclass(frozen=True)
class ProblemSpec:
    kind: str = "ridge_regression"
    N: int = 100
    M: int = 2
    rho: float = 0.01
    # ridge: eigenvalue range of the feature covariance
    feature_eigs: tuple[float, float] = (0.02, 0.2)
    # per-agent observation (ridge) or feature (logistic) noise std range
    noise_std: tuple[float, float] = (0.01, 0.05)
    seed: int = 0
    class_sep: float = 3.0
    holdout: int = 2000


@dataclass(frozen=True)
class RunSpec:
    preset: str = "atc"
    mu: float = 0.4
    steps: int = 1000
    replicas: int = 20
    gradient_mode: str = "stochastic"
    seed: int = 0
    window: typing.Optional[int] = None


@dataclass(frozen=True)
class SchemeSpec:
    scheme: str = "none"
    sigma_g2: float = 0.0
    gh_variant: str = "paper_eq41"
    partition_rule: str = "alternating"
    convention: str = "variance_matched"
    allow_degenerate: bool = False

    def plan(self) -> NoisePlan:
        return NoisePlan(**dataclasses.asdict(self))


@dataclass(frozen=True)
class SweepSpec:
    param: str = "mu"
    values: tuple[float, ...] = ()
    steps: typing.Optional[int] = None


@dataclass(frozen=True)
class PrivacySpec:
    scheme: SchemeSpec = field(default_factory=lambda: SchemeSpec("random", 0.01))
    B: typing.Union[float, str] = AUTO
    B_prime: typing.Union[float, str] = AUTO
    model_gap: typing.Union[float, str] = AUTO
    i_max: int = 100
    paired_agent: typing.Optional[int] = 0
    pair_seed: int = 1
    replicas: int = 1
    rms_factor: float = 3.0


@dataclass(frozen=True)
class ExperimentConfig:
    graph: GraphSpec = field(default_factory=GraphSpec)
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    run: RunSpec = field(default_factory=RunSpec)
    schemes: tuple[SchemeSpec, ...] = (SchemeSpec(),)
    sweep: typing.Optional[SweepSpec] = None
    privacy: typing.Optional[PrivacySpec] = None
    output: str = "results"

    def with_overrides(self, seed: int | None = None, output: str | None = None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = dataclasses.replace(cfg, run=dataclasses.replace(cfg.run, seed=seed))
        if output is not None:
            cfg = dataclasses.replace(cfg, output=output)
        return cfg


# ---------------------------------------------------------------------------
# Generic structural decoding
# ---------------------------------------------------------------------------


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else str(key)


def _decode(tp, value, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        errors = []
        for alt in (a for a in args if a is not type(None)):
            try:
                return _decode(alt, value, path)
            except ConfigError as exc:
                errors.append(str(exc).split(": ", 1)[-1])
        raise ConfigError(path, " or ".join(errors))
    if dataclasses.is_dataclass(tp):
        return _decode_dataclass(tp, value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, "expected a list")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_decode(args[0], v, _join(path, i)) for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(path, f"expected a list of {len(args)} items")
        return tuple(_decode(a, v, _join(path, i)) for i, (a, v) in enumerate(zip(args, value)))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, "expected true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, "expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, "expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, "expected a string")
        return value
    raise TypeError(f"unsupported config type {tp!r}")  # programming error


def _decode_dataclass(cls, value, path: str):
    if value is None:
        value = {}
    if not isinstance(value, dict):
        raise ConfigError(path, "expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in value:
        if key not in names:
            raise ConfigError(_join(path, key), "unknown key")
    kwargs = {k: _decode(hints[k], v, _join(path, k)) for k, v in value.items()}
    return cls(**kwargs)


# ---------------------------------------------------------------------------
# Semantic checks
# ---------------------------------------------------------------------------


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(path, message)


def _check_scheme(spec: SchemeSpec, path: str) -> None:
    try:
        spec.plan()
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    g, pr, r = cfg.graph, cfg.problem, cfg.run
    _require(g.P >= 1, "graph.P", "must be at least 1")
    _require(0 < g.density <= 1, "graph.density", "must lie in (0, 1]")
    _require(g.rule in WEIGHT_RULES, "graph.rule", f"must be one of {sorted(WEIGHT_RULES)}")
    _require(g.min_degree >= 0, "graph.min_degree", "must be non-negative")
    _require(g.min_degree < max(g.P, 2), "graph.min_degree", "must be smaller than P")

    _require(pr.kind in KINDS, "problem.kind", f"must be one of {list(KINDS)}")
    _require(pr.N >= 1, "problem.N", "must be at least 1")
    _require(pr.M >= 1, "problem.M", "must be at least 1")
    _require(pr.rho >= 0, "problem.rho", "must be non-negative")
    lo, hi = pr.feature_eigs
    _require(0 < lo <= hi, "problem.feature_eigs", "need 0 < low <= high")
    lo, hi = pr.noise_std
    _require(0 <= lo <= hi, "problem.noise_std", "need 0 <= low <= high")
    _require(pr.class_sep >= 0, "problem.class_sep", "must be non-negative")
    _require(pr.holdout >= 1, "problem.holdout", "must be at least 1")

    _require(r.preset in PRESETS, "run.preset", f"must be one of {list(PRESETS)}")
    _require(r.mu > 0, "run.mu", "must be positive")
    _require(r.steps >= 1, "run.steps", "must be at least 1")
    _require(r.replicas >= 1, "run.replicas", "must be at least 1")
    _require(r.gradient_mode in GRADIENT_MODES, "run.gradient_mode", f"must be one of {list(GRADIENT_MODES)}")
    if r.window is not None:
        _require(1 <= r.window <= r.steps, "run.window", "must lie in [1, run.steps]")

    _require(len(cfg.schemes) >= 1, "schemes", "list at least one scheme")
    for i, s in enumerate(cfg.schemes):
        _check_scheme(s, f"schemes[{i}]")

    if cfg.sweep is not None:
        sw = cfg.sweep
        _require(sw.param in ("mu", "sigma_g2"), "sweep.param", "must be mu or sigma_g2")
        _require(len(sw.values) >= 2, "sweep.values", "give at least two values")
        _require(all(v > 0 for v in sw.values), "sweep.values", "values must be positive")
        if sw.steps is not None:
            _require(sw.steps >= 1, "sweep.steps", "must be at least 1")
        if sw.param == "sigma_g2":
            for i, s in enumerate(cfg.schemes):
                _require(s.scheme != "none", f"schemes[{i}]", "a sigma_g2 sweep cannot include scheme none")

    if cfg.privacy is not None:
        pv = cfg.privacy
        _check_scheme(pv.scheme, "privacy.scheme")
        for name in ("B", "B_prime", "model_gap"):
            v = getattr(pv, name)
            if isinstance(v, str):
                _require(v == AUTO, f"privacy.{name}", f"must be a number or {AUTO!r}")
            else:
                floor_ok = v >= 0 if name == "model_gap" else v > 0
                _require(floor_ok, f"privacy.{name}", "out of range")
        auto_used = AUTO in (pv.B, pv.B_prime, pv.model_gap)
        _require(pv.i_max >= 0, "privacy.i_max", "must be non-negative")
        _require(pv.replicas >= 1, "privacy.replicas", "must be at least 1")
        _require(pv.rms_factor > 0, "privacy.rms_factor", "must be positive")
        if pv.paired_agent is not None:
            _require(0 <= pv.paired_agent < g.P, "privacy.paired_agent", "must index an agent")
            _require(pr.kind == "ridge_regression", "privacy.paired_agent", "pairing needs a ridge problem")
        elif auto_used:
            raise ConfigError("privacy.paired_agent", "'auto' bounds need a paired agent")
    return cfg


def parse(data) -> ExperimentConfig:
    return validate(_decode_dataclass(ExperimentConfig, data, ""))


class _StrictLoader(yaml.SafeLoader):
    """Safe loader that refuses duplicate mapping keys instead of keeping the last."""


def _strict_mapping(loader, node, deep=False):
    seen = set()
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            raise yaml.constructor.ConstructorError(None, None, f"duplicate key {key!r}", key_node.start_mark)
        seen.add(key)
    return loader.construct_mapping(node, deep=deep)


_StrictLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _strict_mapping)


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.load(text, Loader=_StrictLoader)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"invalid YAML in {path}: {exc}") from None
    return parse(data)
