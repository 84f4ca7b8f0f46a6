"""Experiment configuration (YAML, versioned)."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import yaml

from ..explainers.base import METHODS, ExplainerConfig, ExplainerError
from ..synthgen import DEFAULT_MU, FUNCTIONS, GRID_EPSILONS, GRID_RHOS, PAPER_LITERAL, SIGNAL_SCALED
from ..trees import MODEL_PARAMS

CONFIG_VERSION = 1
OUTPUT_ENV = "XAIBENCH_OUT"
DEFAULT_OUTPUT_ROOT = "xaibench-runs"
RUN_METHODS = METHODS
METRICS = ("consistency", "consistency_truth", "stability", "compactness", "agreement")


class ConfigError(ValueError):
    pass


def digest_of(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SyntheticSelector:
    functions: tuple[str, ...] = FUNCTIONS
    rhos: tuple[float, ...] = GRID_RHOS
    epsilons: tuple[float, ...] = GRID_EPSILONS
    n: int = 1000
    mu: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_MU.items()})
    ground_truth: str = PAPER_LITERAL


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "tree"
    params: dict = field(default_factory=lambda: {"max_depth": 2})
    grid: dict | None = None
    cv_folds: int = 10


@dataclass(frozen=True)
class ExplainSpec:
    methods: tuple[str, ...] = ("Kshap", "Sshap", "Tshap", "TI", "LIME", "LSurro")
    options: dict = field(default_factory=dict)  # method -> ExplainerConfig fields
    background_size: int = 100
    max_instances: int | None = None

    def explainer_config(self, method: str, seed: int) -> ExplainerConfig:
        return ExplainerConfig.from_dict({**self.options.get("all", {}), **self.options.get(method, {}),
                                          "seed": seed})


@dataclass(frozen=True)
class MetricSpec:
    names: tuple[str, ...] = METRICS
    agreement_k: tuple[int, ...] = (1, 2)
    stability_neighbors: int = 10
    compactness_threshold: float = 0.9
    compactness_k: int = 5


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    synthetic: SyntheticSelector | None = None
    datasets: tuple[str, ...] = ()
    data_dir: str | None = None
    test_fraction: float = 0.2
    stratify: bool = False
    model: ModelSpec = field(default_factory=ModelSpec)
    explain: ExplainSpec = field(default_factory=ExplainSpec)
    metrics: MetricSpec = field(default_factory=MetricSpec)
    output: str | None = None
    name: str = "experiment"
    only: tuple[str, ...] = ()  # dataset names to keep; empty keeps all
    version: int = CONFIG_VERSION

    def __post_init__(self):
        validate(self)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("output")
        d.pop("name")
        return d

    def digest(self) -> str:
        """Content digest; excludes the output location and display name."""
        return digest_of(self.to_dict())

    def select(self, datasets=None, methods=None, seed=None) -> ExperimentConfig:
        """Restrict to a subset of datasets/methods or override the seed."""
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if methods:
            unknown = set(methods) - set(cfg.explain.methods)
            if unknown:
                raise ConfigError(f"--method {sorted(unknown)} not in configured methods {list(cfg.explain.methods)}")
            cfg = replace(cfg, explain=replace(cfg.explain, methods=tuple(m for m in cfg.explain.methods
                                                                           if m in methods)))
        if datasets:
            cfg = replace(cfg, only=tuple(datasets))
        return cfg


def validate(cfg: ExperimentConfig) -> None:
    if cfg.version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {cfg.version!r} (expected {CONFIG_VERSION})")
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int):
        raise ConfigError("seed must be an integer")
    if cfg.synthetic is None and not cfg.datasets:
        raise ConfigError("config selects no dataset")
    if cfg.synthetic is not None:
        s = cfg.synthetic
        if not s.functions or not s.rhos or not s.epsilons:
            raise ConfigError("synthetic selector has an empty axis")
        bad = set(s.functions) - set(FUNCTIONS)
        if bad:
            raise ConfigError(f"unknown synthetic functions {sorted(bad)}")
        if s.ground_truth not in (PAPER_LITERAL, SIGNAL_SCALED):
            raise ConfigError(f"ground_truth must be {PAPER_LITERAL!r} or {SIGNAL_SCALED!r}")
    if cfg.model.kind not in MODEL_PARAMS:
        raise ConfigError(f"model kind must be one of {sorted(MODEL_PARAMS)}")
    for params in [cfg.model.params, *([cfg.model.grid] if cfg.model.grid else [])]:
        unknown = set(params) - set(MODEL_PARAMS[cfg.model.kind])
        if unknown:
            raise ConfigError(f"unknown {cfg.model.kind} parameters {sorted(unknown)}")
    if not cfg.explain.methods:
        raise ConfigError("config selects no explainer")
    bad = set(cfg.explain.methods) - set(RUN_METHODS)
    if bad:
        raise ConfigError(f"unknown methods {sorted(bad)}; valid: {list(RUN_METHODS)}")
    for method, opts in cfg.explain.options.items():
        if method != "all" and method not in RUN_METHODS:
            raise ConfigError(f"options given for unknown method {method!r}")
        try:
            ExplainerConfig.from_dict(opts)
        except (ExplainerError, TypeError) as exc:
            raise ConfigError(f"explainer options for {method}: {exc}") from None
    if cfg.explain.background_size < 1:
        raise ConfigError("background_size must be >= 1")
    if not cfg.metrics.names:
        raise ConfigError("config selects no metric")
    bad = set(cfg.metrics.names) - set(METRICS)
    if bad:
        raise ConfigError(f"unknown metrics {sorted(bad)}; valid: {list(METRICS)}")
    if not 0.0 < cfg.metrics.compactness_threshold <= 1.0:
        raise ConfigError("compactness_threshold must lie in (0, 1]")
    if not 0.0 < cfg.test_fraction < 1.0:
        raise ConfigError("test_fraction must lie in (0, 1)")


def _tuple(v):
    return tuple(v) if isinstance(v, (list, tuple)) else (v,)


def _build(cls, d, name, conv=None):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = set(cls.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    d = dict(d)
    for k, fn in (conv or {}).items():
        if k in d and d[k] is not None:
            d[k] = fn(d[k])
    return cls(**d)


def from_dict(d: dict, name: str = "experiment") -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping")
    d = dict(d)
    if "seed" not in d:
        raise ConfigError("config has no seed")
    known = {"version", "seed", "synthetic", "datasets", "data_dir", "split", "model", "explain", "metrics",
             "output", "name"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    split = d.get("split") or {}
    synthetic = None
    if d.get("synthetic") is not None:
        synthetic = _build(SyntheticSelector, d["synthetic"], "synthetic", {
            "functions": _tuple, "rhos": lambda v: tuple(float(x) for x in _tuple(v)),
            "epsilons": lambda v: tuple(float(x) for x in _tuple(v)),
            "mu": lambda v: {**{k: list(x) for k, x in DEFAULT_MU.items()}, **{k: list(x) for k, x in v.items()}}})
    try:
        return ExperimentConfig(
            seed=d["seed"],
            synthetic=synthetic,
            datasets=_tuple(d.get("datasets") or ()),
            data_dir=d.get("data_dir"),
            test_fraction=float(split.get("test_fraction", 0.2)),
            stratify=bool(split.get("stratify", False)),
            model=_build(ModelSpec, d.get("model"), "model"),
            explain=_build(ExplainSpec, d.get("explain"), "explain", {"methods": _tuple}),
            metrics=_build(MetricSpec, d.get("metrics"), "metrics", {"names": _tuple, "agreement_k": _tuple}),
            output=d.get("output"),
            name=str(d.get("name", name)),
            version=d.get("version", CONFIG_VERSION),
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def shipped_configs() -> dict[str, Path]:
    root = resources.files("xaibench") / "configs"
    return {p.name: Path(str(p)) for p in root.iterdir() if p.name.endswith(".yaml")}


def resolve_config_path(path) -> Path:
    """A filesystem path, or the name of a shipped config (``grid`` / ``grid.yaml``)."""
    p = Path(path)
    if p.is_file():
        return p
    shipped = shipped_configs()
    for key in (p.name, f"{p.name}.yaml", f"{p.stem}.yaml"):
        if str(p) == p.name and key in shipped:
            return shipped[key]
    raise ConfigError(f"config not found: {path}")


def load_config(path) -> ExperimentConfig:
    p = resolve_config_path(path)
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: invalid YAML: {exc}") from None
    cfg = from_dict(raw, name=p.stem)
    if cfg.data_dir is not None and not Path(cfg.data_dir).is_absolute() and p.parent.joinpath(cfg.data_dir).exists():
        cfg = replace(cfg, data_dir=str(p.parent / cfg.data_dir))
    return cfg


def output_dir(cfg: ExperimentConfig, override=None) -> Path:
    if override:
        return Path(override)
    if cfg.output:
        return Path(cfg.output)
    return Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT_ROOT)) / cfg.name
