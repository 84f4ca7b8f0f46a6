import numpy as np
import pytest

from xaibench import synthgen
from xaibench.trees import TreeModel, fit_tree


def make_tree(left, right, feature, threshold, counts, n_features, max_depth=None):
    counts = np.asarray(counts, dtype=np.float64)
    p = counts[:, 1] / counts.sum(axis=1)
    gini = 1.0 - p**2 - (1 - p) ** 2
    return TreeModel(np.array(left), np.array(right), np.array(feature), np.array(threshold, dtype=np.float64),
                     counts, gini, n_features, max_depth)


def stump(feature=0, threshold=0.0, left_counts=(10, 0), right_counts=(0, 10), n_features=2):
    """Depth-1 tree: x[feature] <= threshold goes left."""
    root = np.add(left_counts, right_counts)
    return make_tree([1, -1, -1], [2, -1, -1], [feature, -2, -2], [threshold, -2.0, -2.0],
                     [root, left_counts, right_counts], n_features, 1)


@pytest.fixture(scope="session")
def xor_data():
    spec = synthgen.SyntheticSpec("XOR", (0.0, 1.0), 0.0, 0.0, 1000, 3)
    return synthgen.generate(spec)


@pytest.fixture(scope="session")
def xor_tree(xor_data):
    return fit_tree(xor_data, max_depth=2)


@pytest.fixture(scope="session")
def not_stump():
    # NOT: y = 1 - 1[x1 > 0]
    return stump(0, 0.0, (0, 40), (60, 0))


@pytest.fixture(scope="session")
def grid_run(tmp_path_factory):
    """Full shipped grid pipeline, run once per (seed, jobs) in this session."""
    from xaibench.bench import load_config, run

    done = {}

    def get(seed=0, jobs=1):
        if (seed, jobs) not in done:
            out = tmp_path_factory.mktemp(f"grid-s{seed}-j{jobs}")
            run(load_config("grid").select(seed=seed), out, jobs=jobs)
            done[(seed, jobs)] = out
        return done[(seed, jobs)]

    return get


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for crit, status, detail in sorted(mod.RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {crit:>2}: {status}  {detail}")
