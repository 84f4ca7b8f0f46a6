import warnings

import numpy as np
import scipy.linalg

JITTER = 1e-8


def solve_weighted_ridge(X, y, w, lam=0.0, unpenalized=()):
    """Solve ``min sum w_i (y_i - x_i b)^2 + lam * |P b|^2``.

    Returns ``(coef, jittered)``; ``jittered`` is true when the system was
    singular and had to be regularised with a small ridge term.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("design must be a non-empty 2-D matrix")
    if w.shape != y.shape or y.shape[0] != X.shape[0]:
        raise ValueError("design, targets and weights disagree in length")
    if (w < 0).any() or not w.sum() > 0:
        raise ValueError("weights must be non-negative and not all zero")
    p = X.shape[1]
    penalty = np.ones(p)
    penalty[list(unpenalized)] = 0.0
    Xw = X * w[:, None]
    A = X.T @ Xw
    b = Xw.T @ y
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            return scipy.linalg.solve(A + lam * np.diag(penalty), b, assume_a="sym"), False
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
        pass
    reg = np.diag(np.maximum(lam * penalty, JITTER))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        coef = scipy.linalg.solve(A + reg, b, assume_a="sym")
    return coef, True


def weighted_ridge(X, y, w, lam=0.0, unpenalized=()):
    """Weighted ridge regression via the normal equations.

    Columns listed in ``unpenalized`` (typically an intercept column) are
    exempt from the ridge term.
    """
    return solve_weighted_ridge(X, y, w, lam, unpenalized)[0]
