"""Shared types for the local explainers."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..trees import ForestModel, TreeModel

METHODS = ("Kshap", "Sshap", "Tshap", "TI", "LIME", "LSurro", "Exact")
SHAPLEY_METHODS = ("Kshap", "Sshap", "Tshap", "Exact")
PROBABILITY = "probability"
LOG_ODDS = "log-odds"


class ExplainerError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Attribution:
    """Signed per-feature contributions for one explained instance."""

    values: np.ndarray
    base_value: float
    method: str
    target_output: float
    instance_id: int = 0
    flags: tuple[str, ...] = ()
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.isfinite(values).all():
            raise ExplainerError(f"{self.method}: non-finite attribution")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "base_value", float(self.base_value))
        object.__setattr__(self, "target_output", float(self.target_output))

    @property
    def efficiency_gap(self) -> float:
        return float(self.base_value + self.values.sum() - self.target_output)


@dataclass(frozen=True, eq=False)
class Background:
    rows: np.ndarray
    origin: str = "explicit"

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows[None, :]
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise ExplainerError("background needs at least one row")
        if self.origin not in ("training sample", "k-means summary", "explicit"):
            raise ExplainerError(f"unknown background origin {self.origin!r}")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @classmethod
    def sample(cls, X, size: int = 100, seed: int = 0) -> Background:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] <= size:
            return cls(X, "training sample")
        idx = np.sort(np.random.default_rng(seed).choice(X.shape[0], size=size, replace=False))
        return cls(X[idx], "training sample")

    @classmethod
    def kmeans(cls, X, k: int = 10, seed: int = 0) -> Background:
        from scipy.cluster.vq import kmeans2

        centroids, _ = kmeans2(np.asarray(X, dtype=np.float64), k, seed=seed, minit="++")
        return cls(centroids, "k-means summary")


def as_background(bg) -> Background:
    return bg if isinstance(bg, Background) else Background(bg)


@dataclass(frozen=True)
class ExplainerConfig:
    coalition_samples: int = 2048
    kernel_full_enumeration: bool | None = None  # None: enumerate when 2^M - 2 <= coalition_samples
    permutation_samples: int = 100
    sampling_full_enumeration: bool = False
    neighborhood_size: int = 5000
    kernel_width: float | None = None  # None: 0.75 * sqrt(M)
    neighbor_count: int = 50
    ridge_lambda: float = 1.0
    output: str = PROBABILITY
    seed: int = 0

    def __post_init__(self):
        for name in ("coalition_samples", "permutation_samples", "neighborhood_size", "neighbor_count"):
            if getattr(self, name) < 1:
                raise ExplainerError(f"{name} must be >= 1")
        if self.kernel_width is not None and not self.kernel_width > 0:
            raise ExplainerError("kernel_width must be > 0")
        if self.ridge_lambda < 0:
            raise ExplainerError("ridge_lambda must be >= 0")
        if self.output not in (PROBABILITY, LOG_ODDS):
            raise ExplainerError(f"output must be {PROBABILITY!r} or {LOG_ODDS!r}")

    def with_seed(self, seed: int) -> ExplainerConfig:
        return replace(self, seed=int(seed))

    @classmethod
    def from_dict(cls, d: dict | None) -> ExplainerConfig:
        d = dict(d or {})
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ExplainerError(f"unknown explainer options {sorted(unknown)}")
        return cls(**d)


def is_tree_model(model) -> bool:
    return isinstance(model, (TreeModel, ForestModel))


def predict_fn(model, output: str = PROBABILITY):
    """Vectorised ``f(X) -> R^n`` for a fitted model or a plain callable."""
    if is_tree_model(model):
        base = model.predict_value
    elif callable(model):
        def base(X):
            return np.asarray(model(np.asarray(X, dtype=np.float64)), dtype=np.float64).reshape(-1)
    else:
        raise ExplainerError(f"cannot explain object of type {type(model).__name__}")
    if output == PROBABILITY:
        return base

    def log_odds(X):
        p = np.clip(base(X), 1e-6, 1 - 1e-6)
        return np.log(p / (1 - p))

    return log_odds


def check_instance(x, n_features: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if n_features is not None and x.shape[0] != n_features:
        raise ExplainerError(f"instance has {x.shape[0]} features, expected {n_features}")
    if not np.isfinite(x).all():
        raise ExplainerError("non-finite feature value in instance")
    return x


def masked_values(f, x, background: np.ndarray, masks: np.ndarray, chunk_rows: int = 1 << 18) -> np.ndarray:
    """Mean of ``f`` over background rows with ``x`` patched in where ``masks`` is true.

    ``masks`` is a boolean (k, M) array; returns a length-k vector.
    """
    k, m = masks.shape
    r = background.shape[0]
    out = np.empty(k)
    step = max(1, chunk_rows // max(r, 1))
    for s in range(0, k, step):
        mk = masks[s:s + step]
        rows = np.where(mk[:, None, :], x[None, None, :], background[None, :, :])
        out[s:s + step] = f(rows.reshape(-1, m)).reshape(mk.shape[0], r).mean(axis=1)
    return out
