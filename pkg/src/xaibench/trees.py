"""CART classification trees and bagged forests for binary labels."""
from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .data import Dataset, kfold

MODEL_FORMAT_VERSION = 1
LEAF = -1


@dataclass(frozen=True, eq=False)
class TreeModel:
    """Node arena for a fitted tree; node 0 is the root.

    Leaves have ``left == right == -1`` and ``feature == -2``. Samples with
    ``x[feature] <= threshold`` go left.
    """

    left: np.ndarray
    right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    counts: np.ndarray
    impurity: np.ndarray
    n_features: int
    max_depth: int | None = None
    # node -> features whose best cut gives the same partition as the chosen one
    ties: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "ties", {int(k): tuple(int(f) for f in v) for k, v in self.ties.items()})
        for name, dtype in (("left", np.int64), ("right", np.int64), ("feature", np.int64),
                            ("threshold", np.float64), ("counts", np.float64), ("impurity", np.float64)):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        totals = self.counts.sum(axis=1)
        value = np.divide(self.counts[:, 1], totals, out=np.zeros_like(totals), where=totals > 0)
        value.setflags(write=False)
        object.__setattr__(self, "value", value)

    @property
    def n_nodes(self) -> int:
        return self.left.shape[0]

    @property
    def node_samples(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.left == LEAF

    @property
    def class_prior(self) -> tuple[float, float]:
        return (1.0 - float(self.value[0]), float(self.value[0]))

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.left[i] != LEAF:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max(initial=0))

    def apply(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        return _kernels.tree_apply(self.left, self.right, self.feature, self.threshold, X)

    def predict_value(self, X) -> np.ndarray:
        """Probability of class 1 for each row of ``X``."""
        return self.value[self.apply(X)]

    def decision_path(self, x) -> list[int]:
        node = 0
        path = [0]
        while self.left[node] != LEAF:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
            path.append(int(node))
        return path


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[TreeModel, ...]
    seeds: tuple[int, ...] = ()
    max_features: int | None = None
    bootstrap: bool = True

    def __post_init__(self):
        if not self.trees:
            raise ValueError("a forest needs at least one tree")
        m = {t.n_features for t in self.trees}
        if len(m) != 1:
            raise ValueError(f"trees disagree on feature count: {sorted(m)}")
        object.__setattr__(self, "trees", tuple(self.trees))

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    def predict_value(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        total = np.zeros(X.shape[0])
        for t in self.trees:
            total += t.value[_kernels.tree_apply(t.left, t.right, t.feature, t.threshold, X)]
        return total / len(self.trees)


def _check_X(X, n_features) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ValueError(f"expected rows of length {n_features}, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("non-finite feature value")
    return X


def predict_proba(model, X) -> np.ndarray:
    """Class-probability pairs; a single instance gives a length-2 vector."""
    single = np.asarray(X).ndim == 1
    p1 = model.predict_value(X)
    out = np.column_stack([1.0 - p1, p1])
    return out[0] if single else out


def predict(model, X) -> np.ndarray:
    return (model.predict_value(X) > 0.5).astype(np.int64)


def accuracy(model, X, y) -> float:
    return float(np.mean(predict(model, X) == np.asarray(y)))


def _gini(c0: float, c1: float) -> float:
    n = c0 + c1
    if n == 0:
        return 0.0
    return 1.0 - (c0 * c0 + c1 * c1) / (n * n)


def _unpack(ds_or_X, y=None):
    if isinstance(ds_or_X, Dataset):
        if not ds_or_X.is_encoded:
            raise ValueError("dataset must be encoded (numeric, finite) before fitting")
        return ds_or_X.features, ds_or_X.labels
    X = np.asarray(ds_or_X, dtype=np.float64)
    return X, np.asarray(y, dtype=np.int64)


def _grow(X, y, max_depth, min_samples_split, max_features, rng) -> TreeModel:
    n, m = X.shape
    left, right, feature, threshold, counts, impurity = [], [], [], [], [], []
    ties = {}
    # (parent id, is-left, row indices, depth, per-feature split count on the path)
    stack = [(-1, False, np.arange(n), 0, np.zeros(m, dtype=np.int64))]
    while stack:
        parent, is_left, idx, depth, uses = stack.pop()
        node = len(left)
        if parent >= 0:
            (left if is_left else right)[parent] = node
        ys = y[idx]
        c1 = int(ys.sum())
        c0 = idx.size - c1
        left.append(LEAF)
        right.append(LEAF)
        feature.append(-2)
        threshold.append(-2.0)
        counts.append((float(c0), float(c1)))
        impurity.append(_gini(c0, c1))
        if (max_depth is not None and depth >= max_depth) or idx.size < min_samples_split or c0 == 0 or c1 == 0:
            continue
        if max_features is None or max_features >= m:
            cand = np.arange(m)
        else:
            cand = np.sort(rng.choice(m, size=max_features, replace=False))
        dec, thr = _kernels.best_splits(X[idx], ys, cand)
        best = dec.max()
        if not best > _kernels.TIE_TOL:
            continue
        # near-ties: prefer the feature split least often on this path, then the lowest index
        tied = [j for j in range(cand.size) if dec[j] >= best - _kernels.TIE_TOL and np.isfinite(thr[j])]
        j = min(tied, key=lambda t: (uses[cand[t]], cand[t]))
        f = int(cand[j])
        t = float(thr[j])
        feature[node] = f
        threshold[node] = t
        go_left = X[idx, f] <= t
        same = [int(cand[k]) for k in tied if np.array_equal(X[idx, cand[k]] <= thr[k], go_left)]
        if len(same) > 1:
            ties[node] = tuple(sorted(same))
        child_uses = uses.copy()
        child_uses[f] += 1
        stack.append((node, False, idx[~go_left], depth + 1, child_uses))
        stack.append((node, True, idx[go_left], depth + 1, child_uses))
    return TreeModel(np.array(left), np.array(right), np.array(feature), np.array(threshold),
                     np.array(counts).reshape(-1, 2), np.array(impurity), m, max_depth, ties)


def fit_tree(ds, y=None, *, max_depth: int | None = 2, min_samples_split: int = 2, seed: int = 0,
             max_features: int | None = None) -> TreeModel:
    """Greedy CART with Gini impurity.

    Candidate cuts are midpoints between consecutive distinct values. Ties
    in Gini decrease go to the feature used least on the current path, then
    the lowest feature index, then the lowest threshold.
    """
    X, y = _unpack(ds, y)
    if X.shape[0] == 0:
        raise ValueError("cannot fit a tree on an empty dataset")
    if min_samples_split < 2:
        raise ValueError("min_samples_split must be >= 2")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    return _grow(X, y, max_depth, min_samples_split, max_features, np.random.default_rng(seed))


def _fit_one(X, y, max_depth, min_samples_split, max_features, bootstrap, seed):
    rng = np.random.default_rng(seed)
    if bootstrap:
        rows = rng.integers(0, X.shape[0], X.shape[0])
        X, y = X[rows], y[rows]
    return _grow(X, y, max_depth, min_samples_split, max_features, rng)


def fit_forest(ds, y=None, *, n_trees: int = 100, max_depth: int | None = 2, min_samples_split: int = 2,
               max_features: int | None = None, bootstrap: bool = True, seed: int = 0,
               jobs: int = 1) -> ForestModel:
    """Bagged CART trees with per-split feature subsampling.

    ``max_features`` defaults to ``ceil(sqrt(M))``. Each tree gets its own
    seed spawned from ``seed`` so results do not depend on ``jobs``.
    """
    X, y = _unpack(ds, y)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if X.shape[0] == 0:
        raise ValueError("cannot fit a forest on an empty dataset")
    m = X.shape[1]
    if max_features is None:
        max_features = math.ceil(math.sqrt(m))
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n_trees)]
    args = [(X, y, max_depth, min_samples_split, max_features, bootstrap, s) for s in seeds]
    if jobs > 1 and n_trees > 1:
        with ProcessPoolExecutor(jobs) as ex:
            trees = list(ex.map(_fit_one, *zip(*args)))
    else:
        trees = [_fit_one(*a) for a in args]
    return ForestModel(tuple(trees), tuple(seeds), max_features, bootstrap)


def _tree_importance(tree: TreeModel) -> np.ndarray:
    imp = np.zeros(tree.n_features)
    ns = tree.node_samples
    if ns[0] == 0:
        return imp
    for i in np.flatnonzero(tree.left != LEAF):
        lc, rc = tree.left[i], tree.right[i]
        drop = ns[i] * tree.impurity[i] - ns[lc] * tree.impurity[lc] - ns[rc] * tree.impurity[rc]
        shared = tree.ties.get(int(i), (int(tree.feature[i]),))
        imp[list(shared)] += drop / ns[0] / len(shared)
    return imp


def gini_importance(model, normalize: bool = True) -> np.ndarray:
    """Impurity-decrease importance; forests average their trees.

    When several features cut a node into the same two subsets the decrease
    is split evenly among them, which is the expected credit under a random
    choice between those equivalent cuts.
    """
    if isinstance(model, ForestModel):
        per_tree = [_tree_importance(t) for t in model.trees]
        if normalize:
            per_tree = [p / p.sum() if p.sum() > 0 else p for p in per_tree]
        imp = np.mean(per_tree, axis=0)
    else:
        imp = _tree_importance(model)
    if normalize:
        s = imp.sum()
        imp = imp / s if s > 0 else np.zeros_like(imp)
    return imp


# ----------------------------------------------------------------------------
# model selection

MODEL_PARAMS = {
    "tree": ("max_depth", "min_samples_split"),
    "forest": ("n_trees", "max_depth", "min_samples_split", "max_features", "bootstrap"),
}


def fit_model(kind: str, X, y, params: dict, seed: int = 0):
    unknown = set(params) - set(MODEL_PARAMS[kind])
    if unknown:
        raise ValueError(f"unknown {kind} parameters: {sorted(unknown)}")
    if kind == "tree":
        return fit_tree(X, y, seed=seed, **params)
    return fit_forest(X, y, seed=seed, **params)


def expand_grid(grid) -> list[dict]:
    """A dict of lists becomes its cross product in declared key order."""
    if isinstance(grid, dict):
        keys = list(grid)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]
    cells = [dict(c) for c in grid]
    if not cells:
        raise ValueError("empty parameter grid")
    return cells


@dataclass
class GridSearchResult:
    best_params: dict
    best_score: float
    cells: list = field(default_factory=list)  # (params, mean accuracy, fold accuracies)


def _cv_cell(kind, X, y, params, folds, seeds):
    accs = []
    for (train, test), s in zip(folds, seeds):
        model = fit_model(kind, X[train], y[train], params, seed=s)
        accs.append(accuracy(model, X[test], y[test]))
    return accs


def grid_search(ds, grid, k: int = 10, seed: int = 0, kind: str = "tree", jobs: int = 1) -> GridSearchResult:
    """Exhaustive k-fold CV; the first cell in grid order wins ties."""
    X, y = _unpack(ds)
    cells = expand_grid(grid)
    if not cells:
        raise ValueError("empty parameter grid")
    folds = [(f.train, f.test) for f in kfold(X.shape[0], k, seed)]
    cell_seeds = [[int(np.random.SeedSequence([seed, c, i]).generate_state(1)[0]) for i in range(k)]
                  for c in range(len(cells))]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_cv_cell, [kind] * len(cells), [X] * len(cells), [y] * len(cells),
                                  cells, [folds] * len(cells), cell_seeds))
    else:
        results = [_cv_cell(kind, X, y, p, folds, s) for p, s in zip(cells, cell_seeds)]
    best_i = 0
    means = [float(np.mean(r)) for r in results]
    for i, m in enumerate(means):
        if m > means[best_i]:
            best_i = i
    return GridSearchResult(cells[best_i], means[best_i], [(p, m, r) for p, m, r in zip(cells, means, results)])


# ----------------------------------------------------------------------------
# serialization

def _tree_to_dict(t: TreeModel) -> dict:
    nodes = []
    for i in range(t.n_nodes):
        node = {"id": i, "counts": [float(c) for c in t.counts[i]], "gini": float(t.impurity[i])}
        if t.left[i] != LEAF:
            node.update(feature=int(t.feature[i]), threshold=float(t.threshold[i]),
                        left=int(t.left[i]), right=int(t.right[i]))
            if i in t.ties:
                node["ties"] = list(t.ties[i])
        nodes.append(node)
    return {"n_features": t.n_features, "max_depth": t.max_depth, "nodes": nodes}


def _tree_from_dict(d: dict) -> TreeModel:
    nodes = sorted(d["nodes"], key=lambda nd: nd["id"])
    if [nd["id"] for nd in nodes] != list(range(len(nodes))):
        raise ValueError("node ids must be 0..n-1")
    return TreeModel(
        np.array([nd.get("left", LEAF) for nd in nodes]),
        np.array([nd.get("right", LEAF) for nd in nodes]),
        np.array([nd.get("feature", -2) for nd in nodes]),
        np.array([nd.get("threshold", -2.0) for nd in nodes]),
        np.array([nd["counts"] for nd in nodes]).reshape(-1, 2),
        np.array([nd["gini"] for nd in nodes]),
        int(d["n_features"]),
        d.get("max_depth"),
        {nd["id"]: nd["ties"] for nd in nodes if "ties" in nd},
    )


def model_to_dict(model) -> dict:
    if isinstance(model, ForestModel):
        return {"format_version": MODEL_FORMAT_VERSION, "kind": "forest", "seeds": list(model.seeds),
                "max_features": model.max_features, "bootstrap": model.bootstrap,
                "trees": [_tree_to_dict(t) for t in model.trees]}
    return {"format_version": MODEL_FORMAT_VERSION, "kind": "tree", **_tree_to_dict(model)}


def model_from_dict(d: dict):
    version = d.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    if d["kind"] == "forest":
        return ForestModel(tuple(_tree_from_dict(t) for t in d["trees"]), tuple(d.get("seeds", ())),
                           d.get("max_features"), d.get("bootstrap", True))
    return _tree_from_dict(d)


def save_model(model, path, extra: dict | None = None) -> None:
    d = model_to_dict(model)
    if extra:
        d["meta"] = extra
    Path(path).write_text(json.dumps(d, sort_keys=True) + "\n")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))
