"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on identical inputs under both backends; outputs are
checked for agreement before timings are reported.
"""
import argparse
import time

import numpy as np

from xaibench import _kernels, synthgen, trees
from xaibench._kernels import shapley_weight_table


def _workloads():
    ds = synthgen.generate(synthgen.SyntheticSpec("XOR", (0.0, 1.0), 0.3, 0.25, 5000, 0))
    rng = np.random.default_rng(0)
    X8 = rng.normal(size=(5000, 8))
    y8 = (X8[:, 0] * X8[:, 3] > 0).astype(np.int64)
    deep = trees.fit_tree(X8, y8, max_depth=6)
    bg = np.ascontiguousarray(X8[:100])
    x = np.ascontiguousarray(X8[200])
    w = shapley_weight_table(8)
    feats = np.arange(8, dtype=np.int64)
    return {
        "best_splits (n=5000, M=8)": lambda k: k.best_splits(X8, y8, feats),
        "best_splits (n=5000, M=2)": lambda k: k.best_splits(ds.features, ds.labels, np.arange(2, dtype=np.int64)),
        "tree_apply (n=5000, depth 6)": lambda k: k.tree_apply(deep.left, deep.right, deep.feature, deep.threshold, X8),
        "tree_shap (depth 6, 100 bg rows)": lambda k: k.tree_shap_interventional(
            deep.left, deep.right, deep.feature, deep.threshold, deep.value, x, bg, w),
    }


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = _kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only the fallback is available")
    print(f"{'kernel':<36}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, fn in _workloads().items():
        outs = {b: fn(k) for b, k in backends.items()}
        if "cython" in outs:
            a, c = outs["python"], outs["cython"]
            for u, v in zip(a if isinstance(a, tuple) else (a,), c if isinstance(c, tuple) else (c,)):
                np.testing.assert_allclose(u, v, rtol=0, atol=1e-12)
        times = {b: _time(lambda k=k: fn(k), args.repeat) for b, k in backends.items()}
        speed = f"{times['python'] / times['cython']:>9.1f}x" if "cython" in times else ""
        print(f"{name:<36}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times.values()) + speed)


if __name__ == "__main__":
    main()
