"""Randomised equivalence sweep of the Shapley explainers against brute force."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..trees import LEAF, TreeModel
from .base import ExplainerConfig
from .shapley import exact_shapley, kernel_shap
from .treebased import tree_shap


def random_tree(rng: np.random.Generator, n_features: int, max_depth: int, p_split: float = 0.8) -> TreeModel:
    """Random tree structure; features may repeat along a path."""
    left, right, feature, threshold, counts = [], [], [], [], []

    def grow(depth):
        node = len(left)
        left.append(LEAF)
        right.append(LEAF)
        feature.append(-2)
        threshold.append(-2.0)
        counts.append((0.0, 0.0))
        if depth < max_depth and (depth == 0 or rng.random() < p_split):
            feature[node] = int(rng.integers(n_features))
            threshold[node] = float(rng.normal())
            left[node] = grow(depth + 1)
            right[node] = grow(depth + 1)
            counts[node] = (counts[left[node]][0] + counts[right[node]][0],
                            counts[left[node]][1] + counts[right[node]][1])
        else:
            n = float(rng.integers(1, 50))
            c1 = float(rng.integers(0, int(n) + 1))
            counts[node] = (n - c1, c1)
        return node

    grow(0)
    counts_arr = np.array(counts)
    tot = counts_arr.sum(axis=1)
    imp = 1.0 - ((counts_arr / tot[:, None]) ** 2).sum(axis=1)
    return TreeModel(np.array(left), np.array(right), np.array(feature), np.array(threshold),
                     counts_arr, imp, n_features, max_depth)


@dataclass
class OracleCase:
    index: int
    n_features: int
    depth: int
    background: int
    tshap_err: float
    kshap_err: float


def _case(seed: int, index: int) -> OracleCase:
    rng = np.random.default_rng([seed, index])
    m = int(rng.integers(1, 5))
    depth = int(rng.integers(1, 5))
    r = int(rng.integers(1, 33))
    tree = random_tree(rng, m, depth)
    bg = rng.normal(size=(r, m))
    x = rng.normal(size=m)
    exact = exact_shapley(tree, x, bg).values
    ts = tree_shap(tree, x, bg).values
    ks = kernel_shap(tree, x, bg, ExplainerConfig(kernel_full_enumeration=True)).values
    return OracleCase(index, m, depth, r, float(np.max(np.abs(ts - exact))), float(np.max(np.abs(ks - exact))))


def _cases(seed, indices):
    return [_case(seed, i) for i in indices]


def oracle_sweep(n_cases: int = 200, seed: int = 0, jobs: int = 1) -> list[OracleCase]:
    """Random trees (depth <= 4, M <= 4, <= 32 background rows)."""
    idx = np.arange(n_cases)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            parts = list(ex.map(_cases, [seed] * jobs, np.array_split(idx, jobs)))
        return [c for p in parts for c in p]
    return _cases(seed, idx)
