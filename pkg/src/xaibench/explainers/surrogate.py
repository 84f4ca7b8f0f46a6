"""Linear surrogates fitted around one instance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import Attribution, ExplainerConfig, ExplainerError, check_instance, predict_fn
from .ridge import solve_weighted_ridge


@dataclass(frozen=True, eq=False)
class TrainingStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def from_data(cls, X) -> TrainingStats:
        X = np.asarray(X, dtype=np.float64)
        std = X.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(X.mean(axis=0), std)


def _r2(y, pred, w=None) -> float:
    w = np.ones_like(y) if w is None else w
    ybar = np.average(y, weights=w)
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    ss_res = float(np.sum(w * (y - pred) ** 2))
    if ss_tot <= 1e-24:
        return 1.0 if ss_res <= 1e-24 else 0.0
    return 1.0 - ss_res / ss_tot


def lime(model, x, training_stats, cfg: ExplainerConfig | None = None, instance_id: int = 0) -> Attribution:
    """Tabular LIME with Gaussian perturbations and an exponential kernel.

    Samples are drawn per feature from N(train mean, train std), weighted by
    ``exp(-d^2 / width^2)`` where ``d`` is the standardised distance to
    ``x``. The returned values are ridge coefficients times feature std.
    """
    cfg = cfg or ExplainerConfig()
    if not isinstance(training_stats, TrainingStats):
        training_stats = TrainingStats.from_data(training_stats)
    m = training_stats.mean.shape[0]
    x = check_instance(x, m)
    if cfg.neighborhood_size < m + 2:
        raise ExplainerError(f"neighborhood_size must be >= M + 2 = {m + 2}")
    f = predict_fn(model, cfg.output)
    rng = np.random.default_rng(cfg.seed)
    mean, std = training_stats.mean, training_stats.std
    Z = mean + std * rng.standard_normal((cfg.neighborhood_size, m))
    Z[0] = x
    width = cfg.kernel_width if cfg.kernel_width is not None else 0.75 * np.sqrt(m)
    d2 = np.sum(((Z - x) / std) ** 2, axis=1)
    w = np.exp(-d2 / width**2)
    if not w.sum() > 0:
        raise ExplainerError("degenerate LIME neighbourhood: all kernel weights are zero")
    y = f(Z)
    design = np.column_stack([np.ones(Z.shape[0]), Z])
    beta, jittered = solve_weighted_ridge(design, y, w, cfg.ridge_lambda, unpenalized=(0,))
    coef = beta[1:]
    extras = {"coef": coef.tolist(), "fidelity_r2": _r2(y, design @ beta, w), "kernel_width": float(width)}
    return Attribution(coef * std, beta[0], "LIME", float(f(x[None, :])[0]), instance_id,
                       ("ridge_jitter",) if jittered else (), extras)


def local_surrogate(model, x, training, cfg: ExplainerConfig | None = None, instance_id: int = 0) -> Attribution:
    """Unweighted ridge fit on the ``neighbor_count`` nearest training rows."""
    cfg = cfg or ExplainerConfig()
    X = np.asarray(training, dtype=np.float64)
    n, m = X.shape
    x = check_instance(x, m)
    k = cfg.neighbor_count
    if k < m + 1:
        raise ExplainerError(f"neighbor_count={k} < M + 1 = {m + 1}: surrogate is underdetermined")
    if k > n:
        raise ExplainerError(f"neighbor_count={k} exceeds the {n} training rows")
    stats = TrainingStats.from_data(X)
    d2 = np.sum(((X - x) / stats.std) ** 2, axis=1)
    nearest = np.lexsort((np.arange(n), d2))[:k]
    Xn = X[nearest]
    f = predict_fn(model, cfg.output)
    y = f(Xn)
    design = np.column_stack([np.ones(k), Xn])
    beta, jittered = solve_weighted_ridge(design, y, np.ones(k), cfg.ridge_lambda, unpenalized=(0,))
    coef = beta[1:]
    extras = {"coef": coef.tolist(), "fidelity_r2": _r2(y, design @ beta)}
    return Attribution(coef * stats.std, beta[0], "LSurro", float(f(x[None, :])[0]), instance_id,
                       ("ridge_jitter",) if jittered else (), extras)
