import math

import numpy as np
import pytest
from conftest import make_tree, stump
from hypothesis import given, settings
from hypothesis import strategies as st

from xaibench import trees
from xaibench.explainers import (
    LOG_ODDS,
    Background,
    ExplainerConfig,
    ExplainerError,
    TrainingStats,
    exact_shapley,
    explain,
    explain_batch,
    kernel_shap,
    lime,
    local_surrogate,
    sampling_shap,
    shapley_kernel_weight,
    tree_interpreter,
    tree_shap,
    weighted_ridge,
)
from xaibench.explainers.oracle import oracle_sweep, random_tree
from xaibench.explainers.ridge import solve_weighted_ridge


def additive(X):
    return X[:, 0] + 2 * X[:, 1]


def shapley_by_definition(f, x, bg):
    """Independent brute force straight from the permutation definition."""
    m = x.size
    phi = np.zeros(m)
    perms = list(__import__("itertools").permutations(range(m)))
    for p in perms:
        cur = bg.copy()
        prev = f(cur).mean()
        for i in p:
            cur[:, i] = x[i]
            now = f(cur).mean()
            phi[i] += now - prev
            prev = now
    return phi / len(perms)


# ---------------------------------------------------------------- exact

def test_exact_additive_example():
    a = exact_shapley(additive, [1.0, 1.0], np.zeros((1, 2)))
    np.testing.assert_allclose(a.values, [1.0, 2.0], atol=1e-15)
    assert a.base_value == 0.0 and a.target_output == 3.0


def test_exact_matches_permutation_definition():
    rng = np.random.default_rng(1)
    t = random_tree(rng, 4, 3)
    bg = rng.normal(size=(7, 4))
    x = rng.normal(size=4)
    a = exact_shapley(t, x, bg)
    np.testing.assert_allclose(a.values, shapley_by_definition(t.predict_value, x, bg), atol=1e-13)
    assert abs(a.efficiency_gap) < 1e-12


def test_exact_dummy_and_symmetry():
    bg = np.array([[0.0, 0.0, 5.0], [1.0, 1.0, -2.0], [2.0, 2.0, 0.0]])
    a = exact_shapley(lambda X: X[:, 0] * X[:, 1], [3.0, 3.0, 9.0], bg)
    assert a.values[2] == 0.0
    assert a.values[0] == pytest.approx(a.values[1], abs=1e-14)


def test_exact_rejects_large_m():
    with pytest.raises(ExplainerError, match="kernel_shap or sampling_shap"):
        exact_shapley(lambda X: X[:, 0], np.zeros(16), np.zeros((1, 16)))


def test_exact_log_odds_efficiency(not_stump):
    a = exact_shapley(not_stump, [0.5, 0.0], np.array([[-1.0, 0.0], [1.0, 0.0]]), output=LOG_ODDS)
    assert abs(a.efficiency_gap) < 1e-12
    assert a.target_output == pytest.approx(math.log(1e-6 / (1 - 1e-6)))


# ---------------------------------------------------------------- kernel

def test_kernel_weight_example():
    # (M - 1) / (C(3, 1) * 1 * 2) = 2 / 6
    assert shapley_kernel_weight(3, 1) == pytest.approx(1 / 3, rel=1e-15)
    assert shapley_kernel_weight(4, [1, 2]).tolist() == pytest.approx([3 / 12, 3 / 24])


@pytest.mark.parametrize("seed", range(5))
def test_kernel_full_enumeration_m3_matches_exact(seed):
    rng = np.random.default_rng(seed)
    t = random_tree(rng, 3, 4)
    bg = rng.normal(size=(20, 3))
    x = rng.normal(size=3)
    k = kernel_shap(t, x, bg, ExplainerConfig(kernel_full_enumeration=True))
    assert k.extras["full_enumeration"]
    np.testing.assert_allclose(k.values, exact_shapley(t, x, bg).values, atol=1e-6)


def test_kernel_sampled_exact_on_additive_model():
    # v(S) - base is linear in the coalition for an additive f, so any
    # coalition sample fits with zero residual.
    w = np.arange(1.0, 7.0)
    rng = np.random.default_rng(0)
    bg = rng.normal(size=(5, 6))
    x = rng.normal(size=6)
    a = kernel_shap(lambda X: X @ w, x, bg, ExplainerConfig(coalition_samples=20, kernel_full_enumeration=False))
    np.testing.assert_allclose(a.values, w * (x - bg.mean(axis=0)), atol=1e-9)
    assert a.extras["coalitions"] <= 20


def test_kernel_constant_and_single_feature():
    a = kernel_shap(lambda X: np.full(len(X), 0.3), [1.0, 2.0, 3.0], np.zeros((4, 3)))
    np.testing.assert_allclose(a.values, 0.0, atol=1e-15)
    b = kernel_shap(lambda X: 2 * X[:, 0], [1.5], np.zeros((1, 1)))
    assert b.values.tolist() == [3.0]


def test_kernel_sample_budget_validated():
    with pytest.raises(ExplainerError, match="M \\+ 2"):
        kernel_shap(additive, [0.0] * 20, np.zeros((1, 20)),
                    ExplainerConfig(coalition_samples=10, kernel_full_enumeration=False))


def test_kernel_sampled_efficiency_and_determinism():
    rng = np.random.default_rng(4)
    t = random_tree(rng, 12, 4)
    bg = rng.normal(size=(10, 12))
    x = rng.normal(size=12)
    cfg = ExplainerConfig(coalition_samples=300, seed=7)
    a, b = kernel_shap(t, x, bg, cfg), kernel_shap(t, x, bg, cfg)
    assert not a.extras["full_enumeration"]
    assert abs(a.efficiency_gap) < 1e-12
    assert a.values.tobytes() == b.values.tobytes()


# ---------------------------------------------------------------- sampling

def test_sampling_full_enumeration_equals_exact():
    rng = np.random.default_rng(2)
    t = random_tree(rng, 2, 3)
    bg = rng.normal(size=(9, 2))
    x = rng.normal(size=2)
    a = sampling_shap(t, x, bg, ExplainerConfig(sampling_full_enumeration=True))
    np.testing.assert_allclose(a.values, exact_shapley(t, x, bg).values, atol=1e-15)
    assert a.extras["permutations"] == 2


def test_sampling_xor_converges(xor_tree, xor_data):
    bg = Background.sample(xor_data.features, 100, seed=0)
    for x in xor_data.features[:3]:
        a = sampling_shap(xor_tree, x, bg, ExplainerConfig(permutation_samples=10_000, seed=1))
        assert np.max(np.abs(a.values - exact_shapley(xor_tree, x, bg).values)) < 0.05


def test_sampling_dummy_every_sample():
    f = lambda X: np.sin(X[:, 0]) * X[:, 2]  # noqa: E731
    rng = np.random.default_rng(0)
    for s in range(5):
        a = sampling_shap(f, rng.normal(size=3), rng.normal(size=(4, 3)), ExplainerConfig(permutation_samples=1, seed=s))
        assert a.values[1] == 0.0


# ---------------------------------------------------------------- tree shap / TI

def test_tree_shap_oracle_sweep():
    cases = oracle_sweep(60, seed=11)
    assert max(c.tshap_err for c in cases) < 1e-9
    assert max(c.kshap_err for c in cases) < 1e-6
    assert {c.n_features for c in cases} == {1, 2, 3, 4}


def test_tree_shap_single_leaf():
    t = make_tree([-1], [-1], [-2], [-2.0], [(3, 1)], 2)
    a = tree_shap(t, [1.0, 2.0], np.zeros((3, 2)))
    assert a.values.tolist() == [0.0, 0.0] and a.base_value == 0.25


def test_tree_shap_not_stump_dummy(not_stump):
    bg = np.random.default_rng(0).normal(size=(25, 2))
    for x in ([-1.0, 3.0], [1.0, -3.0]):
        a = tree_shap(not_stump, x, bg)
        assert a.values[1] == 0.0
        assert abs(a.efficiency_gap) < 1e-12


def test_tree_explainers_reject_callables():
    with pytest.raises(ExplainerError):
        tree_shap(additive, [0.0, 0.0], np.zeros((1, 2)))
    with pytest.raises(ExplainerError):
        tree_interpreter(additive, [0.0, 0.0])


def test_forest_linearity(xor_data):
    f = trees.fit_forest(xor_data, n_trees=5, seed=0)
    bg = xor_data.features[:30]
    x = xor_data.features[100]
    per_tree = np.mean([tree_shap(t, x, bg).values for t in f.trees], axis=0)
    np.testing.assert_allclose(tree_shap(f, x, bg).values, per_tree, atol=1e-12)
    assert abs(tree_interpreter(f, x).efficiency_gap) < 1e-12


def test_ti_examples(not_stump):
    leaf = make_tree([-1], [-1], [-2], [-2.0], [(3, 1)], 2)
    a = tree_interpreter(leaf, [0.0, 0.0])
    assert a.values.tolist() == [0.0, 0.0] and a.base_value == 0.25
    b = tree_interpreter(not_stump, [-0.5, 2.0])
    # prior is 40 / 100 positive; the left leaf is pure positive
    assert b.values.tolist() == pytest.approx([1.0 - 0.4, 0.0], abs=1e-15)
    assert b.base_value == 0.4


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_ti_telescopes(seed):
    rng = np.random.default_rng(seed)
    t = random_tree(rng, 4, 4)
    assert abs(tree_interpreter(t, rng.normal(size=4)).efficiency_gap) < 1e-12


def test_dummy_feature_never_tested():
    t = stump(feature=1, n_features=3)
    bg = np.random.default_rng(0).normal(size=(8, 3))
    x = np.array([0.3, -0.2, 0.9])
    for a in (exact_shapley(t, x, bg), tree_shap(t, x, bg), tree_interpreter(t, x)):
        assert a.values[0] == 0.0 and a.values[2] == 0.0


# ---------------------------------------------------------------- LIME / LSurro

@pytest.fixture(scope="module")
def linear_world():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(400, 3)) * [1.0, 2.0, 0.5] + [0.0, 1.0, -1.0]
    w = np.array([0.3, -0.1, 0.05])
    return X, w, lambda Z: 0.5 + Z @ w


def test_lime_recovers_linear_weights(linear_world):
    X, w, f = linear_world
    a = lime(f, X[0], TrainingStats.from_data(X), ExplainerConfig(seed=3))
    np.testing.assert_allclose(a.extras["coef"], w, rtol=0.05)
    np.testing.assert_allclose(a.values, np.asarray(a.extras["coef"]) * X.std(axis=0))


def test_lime_constant_model(linear_world):
    X, _, _ = linear_world
    a = lime(lambda Z: np.full(len(Z), 0.7), X[1], X)
    np.testing.assert_allclose(a.values, 0.0, atol=1e-8)
    assert a.base_value == pytest.approx(0.7)


def test_lime_wide_kernel_is_unweighted(linear_world):
    X, _, _ = linear_world
    f = lambda Z: np.tanh(Z[:, 0] * Z[:, 1])  # noqa: E731
    stats = TrainingStats.from_data(X)
    cfg = ExplainerConfig(neighborhood_size=500, kernel_width=1e6, seed=9)
    a = lime(f, X[2], stats, cfg)
    rng = np.random.default_rng(9)
    Z = stats.mean + stats.std * rng.standard_normal((500, 3))
    Z[0] = X[2]
    beta = weighted_ridge(np.column_stack([np.ones(500), Z]), f(Z), np.ones(500), 1.0, unpenalized=(0,))
    np.testing.assert_allclose(a.extras["coef"], beta[1:], atol=1e-6)


def test_lime_neighbourhood_size_checked():
    with pytest.raises(ExplainerError):
        lime(additive, [0.0, 0.0], np.zeros((3, 2)) + [[0, 0], [1, 1], [2, 0]], ExplainerConfig(neighborhood_size=3))


def test_lsurro_global_linear(linear_world):
    X, w, f = linear_world
    a = local_surrogate(f, X[0], X, ExplainerConfig(neighbor_count=len(X)))
    np.testing.assert_allclose(a.extras["coef"], w, rtol=0.05)
    assert a.extras["fidelity_r2"] > 0.99


def test_lsurro_constant_and_errors(linear_world):
    X, _, _ = linear_world
    a = local_surrogate(lambda Z: np.full(len(Z), 0.2), X[0], X)
    np.testing.assert_allclose(a.values, 0.0, atol=1e-12)
    with pytest.raises(ExplainerError, match="underdetermined"):
        local_surrogate(additive, X[0], X, ExplainerConfig(neighbor_count=3))
    with pytest.raises(ExplainerError, match="exceeds"):
        local_surrogate(additive, X[0], X, ExplainerConfig(neighbor_count=401))


def test_lsurro_inside_one_quadrant(xor_tree, xor_data):
    X = xor_data.features
    # a point deep in a quadrant: its 20 nearest rows all share one leaf
    x = np.array([1.5, 2.5])
    a = local_surrogate(xor_tree, x, X, ExplainerConfig(neighbor_count=20))
    np.testing.assert_allclose(a.values, 0.0, atol=1e-12)


# ---------------------------------------------------------------- ridge

def test_ridge_interpolates():
    A = np.array([[1.0, 2.0], [3.0, 5.0]])
    y = np.array([1.0, 2.0])
    np.testing.assert_allclose(weighted_ridge(A, y, np.ones(2)), np.linalg.solve(A, y), atol=1e-12)


def test_ridge_weight_semantics():
    A = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 1.0], [1.0, 0.0]])
    y = np.array([3.0, 3.0, 1.0, 0.5])
    b1 = weighted_ridge(A, y, np.array([2.0, 0.0, 1.0, 1.0]), 0.1)
    b2 = weighted_ridge(A[[0, 2, 3]], y[[0, 2, 3]], np.array([2.0, 1.0, 1.0]), 0.1)
    np.testing.assert_allclose(b1, b2, rtol=1e-12)


def test_ridge_optimality():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(50, 3))
    y = rng.normal(size=50)
    w = rng.random(50)
    lam = 0.7
    b = weighted_ridge(A, y, w, lam)
    assert np.linalg.norm(2 * A.T @ (w * (A @ b - y)) + 2 * lam * b) < 1e-8


def test_ridge_singular_is_jittered():
    A = np.array([[1.0, 1.0], [2.0, 2.0]])
    coef, jittered = solve_weighted_ridge(A, np.array([1.0, 2.0]), np.ones(2))
    assert jittered and np.isfinite(coef).all()
    with pytest.raises(ValueError):
        weighted_ridge(A, np.ones(2), np.zeros(2))


# ---------------------------------------------------------------- batch

def test_batch_empty():
    assert explain_batch("Tshap", stump(), np.zeros((0, 2)), np.zeros((1, 2))) == []


def test_batch_deterministic_and_order_free(xor_tree, xor_data):
    X = xor_data.features[:12]
    bg = xor_data.features[500:540]
    cfg = ExplainerConfig(coalition_samples=2, permutation_samples=20, seed=5)
    for method in ("Sshap", "LIME"):
        kw = dict(background=bg, cfg=cfg, training=xor_data.features)
        a = explain_batch(method, xor_tree, X, **kw)
        b = explain_batch(method, xor_tree, X, **kw)
        assert [r.values.tobytes() for r in a] == [r.values.tobytes() for r in b]
        order = np.arange(12)[::-1]
        c = explain_batch(method, xor_tree, X[order], instance_ids=order, jobs=2, **kw)
        by_id = {r.instance_id: r.values.tobytes() for r in c}
        assert [by_id[r.instance_id] for r in a] == [r.values.tobytes() for r in a]


def test_batch_tshap_efficiency(xor_tree, xor_data):
    res = explain_batch("Tshap", xor_tree, xor_data.features[-200:], Background.sample(xor_data.features, 100))
    assert len(res) == 200 and not res.failures
    assert max(abs(a.efficiency_gap) for a in res) < 1e-9


def test_batch_collects_failures(xor_tree, xor_data):
    res = explain_batch("LSurro", xor_tree, xor_data.features[:3], cfg=ExplainerConfig(neighbor_count=2),
                        training=xor_data.features)
    assert len(res) == 0 and [i for i, _ in res.failures] == [0, 1, 2]


def test_unknown_method():
    with pytest.raises(ExplainerError, match="unknown method"):
        explain("SHAP", stump(), [0.0, 0.0], np.zeros((1, 2)))
