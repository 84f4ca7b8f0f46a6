"""Pure numpy / Python implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
The two must agree bit-for-bit on split search and tree traversal; the
Shapley accumulation agrees to rounding.
"""
import numpy as np

TIE_TOL = 1e-12


def tree_apply(left, right, feature, threshold, X):
    """Leaf index reached by every row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    active = left[node] != -1
    rows = np.arange(n)
    while active.any():
        idx = rows[active]
        nd = node[idx]
        go_left = X[idx, feature[nd]] <= threshold[nd]
        node[idx] = np.where(go_left, left[nd], right[nd])
        active[idx] = left[node[idx]] != -1
    return node


def best_splits(X, y, features):
    """Best Gini split per candidate feature.

    Returns ``(decrease, threshold)`` arrays aligned with ``features``. A
    feature with no usable cut point gets decrease 0 and threshold NaN.
    Within a feature, near-ties (``TIE_TOL``) resolve to the lowest threshold.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = y.shape[0]
    n_feat = len(features)
    dec = np.zeros(n_feat)
    thr = np.full(n_feat, np.nan)
    if n < 2:
        return dec, thr
    c1 = int(y.sum())
    c0 = n - c1
    parent_w = n - float(c1 * c1 + c0 * c0) / n
    sizes_left = np.arange(1, n, dtype=np.int64)
    sizes_right = n - sizes_left
    for j, f in enumerate(features):
        order = np.argsort(X[:, f], kind="stable")
        v = X[order, f]
        ys = y[order]
        c1_left = np.cumsum(ys)[:-1]
        c0_left = sizes_left - c1_left
        c1_right = c1 - c1_left
        c0_right = sizes_right - c1_right
        sq_left = (c1_left * c1_left + c0_left * c0_left).astype(np.float64)
        sq_right = (c1_right * c1_right + c0_right * c0_right).astype(np.float64)
        gl = sizes_left - sq_left / sizes_left
        gr = sizes_right - sq_right / sizes_right
        d = (parent_w - (gl + gr)) / n
        valid = v[:-1] < v[1:]
        if not valid.any():
            continue
        d = np.where(valid, d, -np.inf)
        best = d.max()
        i = int(np.argmax(d >= best - TIE_TOL))
        mid = (v[i] + v[i + 1]) / 2.0
        if mid == v[i + 1]:
            mid = v[i]
        dec[j] = d[i]
        thr[j] = mid
    return dec, thr


def tree_shap_interventional(left, right, feature, threshold, value, x, background, weights):
    """Interventional Shapley values of one tree, averaged over background rows.

    ``weights[p, q]`` must hold ``p! q! / (p + q + 1)!``.
    """
    x = np.asarray(x, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    n_features = x.shape[0]
    phi = np.zeros(n_features)
    left = left.tolist()
    right = right.tolist()
    feature = feature.tolist()
    threshold = threshold.tolist()
    value = value.tolist()
    xl = x.tolist()
    w = weights.tolist()

    for r in background.tolist():
        state = [0] * n_features
        sx = []
        sr = []

        def walk(node):
            f = feature[node]
            if left[node] == -1:
                v = value[node]
                a = len(sx)
                b = len(sr)
                if a:
                    c = w[a - 1][b] * v
                    for i in sx:
                        phi[i] += c
                if b:
                    c = w[a][b - 1] * v
                    for i in sr:
                        phi[i] -= c
                return
            t = threshold[node]
            x_left = xl[f] <= t
            r_left = r[f] <= t
            s = state[f]
            if s == 1:
                walk(left[node] if x_left else right[node])
            elif s == 2:
                walk(left[node] if r_left else right[node])
            elif x_left == r_left:
                walk(left[node] if x_left else right[node])
            else:
                state[f] = 1
                sx.append(f)
                walk(left[node] if x_left else right[node])
                sx.pop()
                state[f] = 2
                sr.append(f)
                walk(left[node] if r_left else right[node])
                sr.pop()
                state[f] = 0

        walk(0)
    if background.shape[0]:
        phi /= background.shape[0]
    return phi
