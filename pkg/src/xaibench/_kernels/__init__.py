"""Hot kernels with a compiled backend and a pure-Python fallback.

The compiled extension is used when it imports; setting the environment
variable ``XAIBENCH_PURE_PYTHON=1`` forces the fallback.
"""
import math
import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback

if not os.environ.get("XAIBENCH_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback

tree_apply = _impl.tree_apply
best_splits = _impl.best_splits
tree_shap_interventional = _impl.tree_shap_interventional
TIE_TOL = _fallback.TIE_TOL


def available_backends():
    """Mapping of backend name to kernel module, for cross-checking."""
    out = {"python": _fallback}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out


def shapley_weight_table(m):
    """Table ``w[p, q] = p! q! / (p + q + 1)!`` for ``p, q < m``."""
    size = max(m, 1)
    w = np.zeros((size, size))
    for p in range(size):
        for q in range(size - p):
            w[p, q] = math.factorial(p) * math.factorial(q) / math.factorial(p + q + 1)
    return w
