"""Model-agnostic Shapley estimators with an interventional value function.

``v(S)`` is the mean model output over background rows with the features
in ``S`` taken from the explained instance.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .base import (
    Attribution,
    ExplainerConfig,
    ExplainerError,
    as_background,
    check_instance,
    masked_values,
    predict_fn,
)
from .ridge import solve_weighted_ridge

MAX_EXACT_FEATURES = 15
MAX_PERMUTATION_ENUMERATION = 8


def _all_masks(m: int) -> np.ndarray:
    codes = np.arange(1 << m)
    return ((codes[:, None] >> np.arange(m)[None, :]) & 1).astype(bool)


def exact_shapley(model, x, background, output: str = "probability", instance_id: int = 0) -> Attribution:
    """Brute-force Shapley values over all ``2^M`` coalitions."""
    bg = as_background(background).rows
    m = bg.shape[1]
    if m > MAX_EXACT_FEATURES:
        raise ExplainerError(f"exact enumeration supports M <= {MAX_EXACT_FEATURES}, got {m}; "
                             "use kernel_shap or sampling_shap")
    x = check_instance(x, m)
    f = predict_fn(model, output)
    v = masked_values(f, x, bg, _all_masks(m))
    fx = float(f(x[None, :])[0])
    codes = np.arange(1 << m)
    sizes = np.array([bin(c).count("1") for c in codes])
    coef = np.array([math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m) if s < m else 0.0
                     for s in range(m + 1)])
    phi = np.zeros(m)
    for i in range(m):
        without = codes[(codes >> i) & 1 == 0]
        phi[i] = np.sum(coef[sizes[without]] * (v[without | (1 << i)] - v[without]))
    return Attribution(phi, v[0], "Exact", fx, instance_id)


def shapley_kernel_weight(m: int, s) -> np.ndarray:
    """Shapley kernel ``(M - 1) / (C(M, s) s (M - s))`` for coalition size ``s``."""
    s = np.asarray(s)
    comb = np.array([math.comb(m, int(k)) for k in s.reshape(-1)], dtype=np.float64).reshape(s.shape)
    with np.errstate(divide="ignore"):
        return (m - 1) / (comb * s * (m - s))


def _sample_coalitions(m: int, n_samples: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Paired draws with size probability proportional to the kernel mass."""
    sizes = np.arange(1, m)
    size_mass = (m - 1) / (sizes * (m - sizes))
    size_p = size_mass / size_mass.sum()
    n_pairs = max(1, n_samples // 2)
    masks = np.zeros((2 * n_pairs, m), dtype=bool)
    drawn = rng.choice(sizes, size=n_pairs, p=size_p)
    for k, s in enumerate(drawn):
        idx = rng.choice(m, size=s, replace=False)
        masks[2 * k, idx] = True
        masks[2 * k + 1] = ~masks[2 * k]
    uniq, counts = np.unique(masks, axis=0, return_counts=True)
    return uniq, counts.astype(np.float64)


def kernel_shap(model, x, background, cfg: ExplainerConfig | None = None, instance_id: int = 0) -> Attribution:
    """Constrained weighted least squares over coalitions with the Shapley kernel.

    The efficiency constraint ``sum(phi) = f(x) - v(empty)`` is imposed by
    eliminating the last feature. With full enumeration the result is the
    exact Shapley value.
    """
    cfg = cfg or ExplainerConfig()
    bg = as_background(background).rows
    m = bg.shape[1]
    x = check_instance(x, m)
    f = predict_fn(model, cfg.output)
    base = float(f(bg).mean())
    fx = float(f(x[None, :])[0])
    delta = fx - base
    if m == 1:
        return Attribution([delta], base, "Kshap", fx, instance_id)
    full = cfg.kernel_full_enumeration
    if full is None:
        full = m <= MAX_EXACT_FEATURES and (1 << m) - 2 <= cfg.coalition_samples
    if full:
        if m > MAX_EXACT_FEATURES:
            raise ExplainerError(f"full enumeration supports M <= {MAX_EXACT_FEATURES}, got {m}")
        masks = _all_masks(m)[1:-1]
        weights = shapley_kernel_weight(m, masks.sum(axis=1))
    else:
        if cfg.coalition_samples < m + 2:
            raise ExplainerError(f"coalition_samples must be >= M + 2 = {m + 2}")
        masks, weights = _sample_coalitions(m, cfg.coalition_samples, np.random.default_rng(cfg.seed))
    v = masked_values(f, x, bg, masks)
    z = masks.astype(np.float64)
    target = v - base - z[:, -1] * delta
    design = z[:, :-1] - z[:, -1:]
    coef, jittered = solve_weighted_ridge(design, target, weights, 0.0)
    phi = np.append(coef, delta - coef.sum())
    flags = ("ridge_jitter",) if jittered else ()
    extras = {"coalitions": int(masks.shape[0]), "full_enumeration": bool(full)}
    return Attribution(phi, base, "Kshap", fx, instance_id, flags, extras)


def sampling_shap(model, x, background, cfg: ExplainerConfig | None = None, instance_id: int = 0,
                  chunk_rows: int = 1 << 18) -> Attribution:
    """Monte-Carlo permutation estimate.

    Each sampled feature ordering is walked once against every background
    row; a feature's credit is the output change when it switches from the
    background value to the instance value. ``sampling_full_enumeration``
    walks all ``M!`` orderings instead, which gives the exact value.
    """
    cfg = cfg or ExplainerConfig()
    bg = as_background(background).rows
    m = bg.shape[1]
    r = bg.shape[0]
    x = check_instance(x, m)
    f = predict_fn(model, cfg.output)
    if cfg.sampling_full_enumeration:
        if m > MAX_PERMUTATION_ENUMERATION:
            raise ExplainerError(f"permutation enumeration supports M <= {MAX_PERMUTATION_ENUMERATION}")
        perms = np.array(list(itertools.permutations(range(m))), dtype=np.int64)
    else:
        rng = np.random.default_rng(cfg.seed)
        perms = np.array([rng.permutation(m) for _ in range(cfg.permutation_samples)], dtype=np.int64)
    # pos[p, i] = position of feature i in ordering p
    pos = np.argsort(perms, axis=1)
    steps = np.arange(m + 1)
    phi = np.zeros(m)
    per_perm = (m + 1) * r
    step = max(1, chunk_rows // per_perm)
    for s in range(0, perms.shape[0], step):
        ps = pos[s:s + step]
        k = ps.shape[0]
        mask = ps[:, None, :] < steps[None, :, None]  # (k, m+1, m)
        rows = np.where(mask[:, :, None, :], x[None, None, None, :], bg[None, None, :, :])
        out = f(rows.reshape(-1, m)).reshape(k, m + 1, r)
        marg = np.diff(out, axis=1).mean(axis=2)  # (k, m): credit of the feature at each position
        phi += np.take_along_axis(marg, ps, axis=1).sum(axis=0)
    phi /= perms.shape[0]
    base = float(f(bg).mean())
    fx = float(f(x[None, :])[0])
    return Attribution(phi, base, "Sshap", fx, instance_id, extras={"permutations": int(perms.shape[0])})
