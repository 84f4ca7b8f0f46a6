from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .base import METHODS, Background, ExplainerConfig, ExplainerError, as_background
from .shapley import exact_shapley, kernel_shap, sampling_shap
from .surrogate import TrainingStats, lime, local_surrogate
from .treebased import tree_interpreter, tree_shap

logger = logging.getLogger(__name__)


def instance_seed(base_seed: int, instance_id: int) -> int:
    return int(np.random.SeedSequence([int(base_seed), int(instance_id)]).generate_state(1)[0])


def explain(method: str, model, x, background=None, cfg: ExplainerConfig | None = None,
            training=None, instance_id: int = 0):
    """Run one explainer by its short name (``Kshap``, ``TI``, ...)."""
    cfg = cfg or ExplainerConfig()
    if method == "Kshap":
        return kernel_shap(model, x, background, cfg, instance_id)
    if method == "Sshap":
        return sampling_shap(model, x, background, cfg, instance_id)
    if method == "Tshap":
        return tree_shap(model, x, background, instance_id)
    if method == "Exact":
        return exact_shapley(model, x, background, cfg.output, instance_id)
    if method == "TI":
        return tree_interpreter(model, x, instance_id)
    if method == "LIME":
        stats = training if isinstance(training, TrainingStats) else TrainingStats.from_data(
            training if training is not None else as_background(background).rows)
        return lime(model, x, stats, cfg, instance_id)
    if method == "LSurro":
        if training is None:
            raise ExplainerError("LSurro needs the training matrix")
        return local_surrogate(model, x, training, cfg, instance_id)
    raise ExplainerError(f"unknown method {method!r}; expected one of {METHODS}")


class BatchResult(list):
    """List of attributions; ``failures`` holds ``(instance_id, message)`` pairs."""

    def __init__(self, items=(), failures=()):
        super().__init__(items)
        self.failures = list(failures)


def _run_chunk(method, model, X, ids, background, cfg, training):
    out, failures = [], []
    for x, i in zip(X, ids):
        try:
            out.append(explain(method, model, x, background, cfg.with_seed(instance_seed(cfg.seed, i)),
                               training, int(i)))
        except (ExplainerError, ValueError, np.linalg.LinAlgError) as exc:
            failures.append((int(i), f"{type(exc).__name__}: {exc}"))
    return out, failures


def explain_batch(method: str, model, instances, background=None, cfg: ExplainerConfig | None = None,
                  training=None, instance_ids=None, jobs: int = 1) -> BatchResult:
    """Explain every row of ``instances``.

    Each instance uses a seed derived from ``(cfg.seed, instance_id)``, so
    results do not depend on ordering or ``jobs``. Failures are collected,
    not raised.
    """
    cfg = cfg or ExplainerConfig()
    X = np.asarray(instances, dtype=np.float64)
    if X.size == 0:
        return BatchResult()
    if X.ndim == 1:
        X = X[None, :]
    ids = np.arange(X.shape[0]) if instance_ids is None else np.asarray(instance_ids)
    if background is not None and not isinstance(background, Background):
        background = Background(background)
    if jobs > 1 and X.shape[0] > 1:
        chunks = np.array_split(np.arange(X.shape[0]), min(jobs, X.shape[0]))
        with ProcessPoolExecutor(jobs) as ex:
            parts = list(ex.map(_run_chunk, *zip(*[(method, model, X[c], ids[c], background, cfg, training)
                                                   for c in chunks])))
    else:
        parts = [_run_chunk(method, model, X, ids, background, cfg, training)]
    result = BatchResult()
    for out, failures in parts:
        result.extend(out)
        result.failures.extend(failures)
    for i, msg in result.failures:
        logger.warning("%s failed on instance %d: %s", method, i, msg)
    return result
