"""Explainers that read the tree structure directly."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .. import _kernels
from ..trees import ForestModel, TreeModel
from .base import Attribution, ExplainerError, as_background, check_instance


def _trees_of(model) -> tuple[TreeModel, ...]:
    if isinstance(model, ForestModel):
        return model.trees
    if isinstance(model, TreeModel):
        return (model,)
    raise ExplainerError(f"tree-specific explainer cannot handle {type(model).__name__}")


@lru_cache(maxsize=64)
def _weights(m: int) -> np.ndarray:
    w = _kernels.shapley_weight_table(m)
    w.setflags(write=False)
    return w


def tree_shap(model, x, background, instance_id: int = 0) -> Attribution:
    """Interventional Tree SHAP.

    For each background row the tree is walked with the (instance,
    reference) pair; a leaf reached by following the instance on features
    ``Sx`` and the reference on ``Sr`` is a game whose Shapley values have a
    closed form in ``|Sx|`` and ``|Sr|``. Values are averaged over
    background rows and over the trees of a forest.
    """
    trees = _trees_of(model)
    bg = as_background(background).rows
    m = trees[0].n_features
    if bg.shape[1] != m:
        raise ExplainerError(f"background has {bg.shape[1]} columns, model expects {m}")
    x = check_instance(x, m)
    w = _weights(m)
    phi = np.zeros(m)
    for t in trees:
        phi += _kernels.tree_shap_interventional(t.left, t.right, t.feature, t.threshold, t.value, x, bg, w)
    phi /= len(trees)
    base = float(model.predict_value(bg).mean())
    fx = float(model.predict_value(x[None, :])[0])
    return Attribution(phi, base, "Tshap", fx, instance_id)


def tree_interpreter(model, x, instance_id: int = 0) -> Attribution:
    """Decision-path decomposition into a root bias plus per-feature steps."""
    trees = _trees_of(model)
    m = trees[0].n_features
    x = check_instance(x, m)
    phi = np.zeros(m)
    base = 0.0
    fx = 0.0
    for t in trees:
        path = t.decision_path(x)
        base += t.value[0]
        fx += t.value[path[-1]]
        for parent, child in zip(path[:-1], path[1:]):
            phi[t.feature[parent]] += t.value[child] - t.value[parent]
    k = len(trees)
    return Attribution(phi / k, base / k, "TI", fx / k, instance_id)
