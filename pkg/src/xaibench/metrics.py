"""Scores for attribution vectors: agreement, stability, compactness."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .explainers.base import Attribution, predict_fn

logger = logging.getLogger(__name__)

AGGREGATES = ("mean", "variance")


@dataclass(frozen=True, eq=False)
class NormalizedAttribution:
    shares: np.ndarray
    source: Attribution | None = None
    degenerate: bool = False


def normalize_values(values) -> tuple[np.ndarray, bool]:
    """``|phi| / sum |phi|``; an all-zero vector maps to uniform shares."""
    v = np.abs(np.asarray(values, dtype=np.float64))
    if v.ndim != 1 or not np.isfinite(v).all():
        raise ValueError("attribution values must be a finite vector")
    total = v.sum()
    if total == 0:
        return np.full(v.shape[0], 1.0 / v.shape[0]), True
    return v / total, False


def normalize(a) -> NormalizedAttribution:
    values = a.values if isinstance(a, Attribution) else a
    shares, degenerate = normalize_values(values)
    return NormalizedAttribution(shares, a if isinstance(a, Attribution) else None, degenerate)


def normalize_rows(values: np.ndarray) -> np.ndarray:
    v = np.abs(np.asarray(values, dtype=np.float64))
    total = v.sum(axis=1, keepdims=True)
    uniform = np.full_like(v, 1.0 / v.shape[1])
    return np.where(total > 0, v / np.where(total > 0, total, 1.0), uniform)


def consistency(a, b) -> float:
    """Euclidean distance between two share vectors (lower is better)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def top_k(scores, k: int) -> np.ndarray:
    """Indices of the ``k`` largest ``|scores|``; ties go to the lower index."""
    s = np.abs(np.asarray(scores, dtype=np.float64))
    if not 1 <= k <= s.shape[0]:
        raise ValueError(f"k={k} must lie in [1, {s.shape[0]}]")
    return np.argsort(-s, kind="stable")[:k]


def feature_agreement(a, b, k: int) -> float:
    if len(a) != len(b):
        raise ValueError("rankings must cover the same features")
    return len(set(top_k(a, k).tolist()) & set(top_k(b, k).tolist())) / k


def rank_agreement(a, b, k: int) -> float:
    if len(a) != len(b):
        raise ValueError("rankings must cover the same features")
    return float(np.mean(top_k(a, k) == top_k(b, k)))


def _standardize(X):
    X = np.asarray(X, dtype=np.float64)
    std = X.std(axis=0)
    return X / np.where(std > 0, std, 1.0)


def stability_all(shares, X, predicted, n_neighbors: int = 10):
    """Per-instance mean L2 distance to the explanations of nearby instances.

    Neighbours are the ``n_neighbors`` closest rows (standardised Euclidean)
    with the same predicted class. An instance with no same-class neighbour
    falls back to all rows and is flagged.
    """
    shares = np.asarray(shares, dtype=np.float64)
    predicted = np.asarray(predicted)
    n = shares.shape[0]
    if not 1 <= n_neighbors <= n - 1:
        raise ValueError(f"n_neighbors={n_neighbors} must lie in [1, {n - 1}]")
    Z = _standardize(X)
    values = np.empty(n)
    flagged = np.zeros(n, dtype=bool)
    idx = np.arange(n)
    for i in range(n):
        d2 = np.sum((Z - Z[i]) ** 2, axis=1)
        others = idx != i
        same = others & (predicted == predicted[i])
        pool = same if same.any() else others
        flagged[i] = not same.any()
        cand = idx[pool]
        order = np.lexsort((cand, d2[cand]))[:n_neighbors]
        nb = cand[order]
        values[i] = np.linalg.norm(shares[nb] - shares[i], axis=1).mean()
    return values, flagged


def stability(shares, X, predicted, instance: int, n_neighbors: int = 10) -> float:
    values, _ = stability_all(shares, X, predicted, n_neighbors)
    return float(values[instance])


def _masked_rows(x, order, fill):
    """Row ``k-1`` keeps the ``k`` top-ranked features of ``x``, ``fill`` elsewhere."""
    m = x.shape[0]
    keep = np.zeros((m, m), dtype=bool)
    for k in range(1, m + 1):
        keep[k - 1, order[:k]] = True
    return np.where(keep, x[None, :], fill[None, :])


@dataclass
class CompactnessResult:
    k_needed: int
    fidelity_curve: np.ndarray  # index k-1 -> fraction of instances whose label survives masking
    distance_curve: np.ndarray  # index k-1 -> mean |f(masked) - f(x)|
    per_instance: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))  # (n, M) 0/1 matches
    distances: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))  # (n, M) |f(masked) - f(x)|

    def fidelity_at(self, k: int) -> float:
        return float(self.fidelity_curve[min(k, self.fidelity_curve.shape[0]) - 1])

    def distance_at(self, k: int) -> float:
        return float(self.distance_curve[min(k, self.distance_curve.shape[0]) - 1])


def compactness(model, instance, a, background, threshold: float = 0.9) -> dict:
    """Single-instance masking curve; see :func:`compactness_batch`."""
    res = compactness_batch(model, np.asarray(instance)[None, :], [a], background, threshold)
    return {"k_needed": res.k_needed, "fidelity_curve": res.per_instance[0]}


def compactness_batch(model, X, attributions, background, threshold: float = 0.9) -> CompactnessResult:
    """Fewest top-|phi| features that preserve the predicted label.

    For each instance and each ``k``, the features outside the top ``k`` are
    replaced by background column means and the predicted label is compared
    with the unmasked one. ``k_needed`` is the smallest ``k`` at which the
    matched fraction over ``X`` reaches ``threshold``.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    X = np.asarray(X, dtype=np.float64)
    n, m = X.shape
    bg = background.rows if hasattr(background, "rows") else np.asarray(background, dtype=np.float64)
    fill = bg.mean(axis=0)
    f = predict_fn(model, "probability")
    rows = np.empty((n, m, m))
    for i, (x, a) in enumerate(zip(X, attributions)):
        values = a.values if isinstance(a, Attribution) else np.asarray(a)
        rows[i] = _masked_rows(x, top_k(values, m), fill)
    full = f(X)
    masked = f(rows.reshape(-1, m)).reshape(n, m)
    matched = (masked > 0.5) == (full > 0.5)[:, None]
    curve = matched.mean(axis=0)
    dist = np.abs(masked - full[:, None])
    reached = np.flatnonzero(curve >= threshold - 1e-12)
    k_needed = int(reached[0]) + 1 if reached.size else m
    return CompactnessResult(k_needed, curve, dist.mean(axis=0), matched.astype(np.float64), dist)


# ----------------------------------------------------------------------------
# cross-method comparisons

def pairwise_consistency(shares_by_method: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Per-instance mean L2 distance from each method to every other method."""
    methods = list(shares_by_method)
    out = {}
    for m in methods:
        others = [o for o in methods if o != m]
        if not others:
            continue
        d = [np.linalg.norm(shares_by_method[m] - shares_by_method[o], axis=1) for o in others]
        out[m] = np.mean(d, axis=0)
    return out


def agreement_matrix(shares_by_method: dict[str, np.ndarray], k: int, kind: str = "feature") -> np.ndarray:
    """Method x method mean top-``k`` agreement over instances."""
    fn = {"feature": feature_agreement, "rank": rank_agreement}[kind]
    methods = list(shares_by_method)
    mat = np.ones((len(methods), len(methods)))
    for i, a in enumerate(methods):
        for j, b in enumerate(methods):
            if j <= i:
                continue
            vals = [fn(ra, rb, k) for ra, rb in zip(shares_by_method[a], shares_by_method[b])]
            mat[i, j] = mat[j, i] = float(np.mean(vals))
    return mat


# ----------------------------------------------------------------------------
# reports

@dataclass
class MetricReport:
    """Metric values keyed by ``(dataset, model, method, metric, aggregate)``."""

    entries: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def add(self, dataset: str, model: str, method: str, metric: str, aggregate: str, value: float) -> None:
        key = (dataset, model, method, metric, aggregate)
        if key in self.entries:
            raise KeyError(f"duplicate metric key {key}")
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"non-finite value for {key}")
        self.entries[key] = value

    def get(self, dataset, model, method, metric, aggregate="mean") -> float:
        return self.entries[(dataset, model, method, metric, aggregate)]

    def merge(self, other: MetricReport) -> None:
        for key, value in other.entries.items():
            self.add(*key, value)

    def keys(self):
        return sorted(self.entries)

    def select(self, **kw) -> dict:
        names = ("dataset", "model", "method", "metric", "aggregate")
        return {k: v for k, v in self.entries.items()
                if all(k[names.index(n)] == val for n, val in kw.items())}

    def __len__(self):
        return len(self.entries)


def aggregate(values: dict, report: MetricReport | None = None) -> MetricReport:
    """Fold per-instance values into mean/variance entries.

    ``values`` maps ``(dataset, model, method, metric)`` to a sequence of
    per-instance numbers; empty groups are skipped with a warning.
    """
    report = report if report is not None else MetricReport()
    for key in sorted(values):
        arr = np.asarray(values[key], dtype=np.float64).reshape(-1)
        if arr.size == 0:
            logger.warning("empty metric group %s omitted", key)
            continue
        report.add(*key, "mean", float(arr.mean()))
        report.add(*key, "variance", float(arr.var()))
    return report
