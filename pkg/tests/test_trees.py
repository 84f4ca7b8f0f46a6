import numpy as np
import pytest
from conftest import make_tree, stump
from hypothesis import given, settings
from hypothesis import strategies as st

from xaibench import data, synthgen, trees
from xaibench.trees import ForestModel, fit_forest, fit_tree, gini_importance, predict_proba


def grid_ds(fn, rho, eps, seed=0, n=1000):
    return synthgen.generate(synthgen.SyntheticSpec(fn, synthgen.DEFAULT_MU[fn], rho, eps, n, seed))


def split_fit(ds, seed=0, **kw):
    sp = data.split(ds, 0.2, seed)
    tr, te = ds.subset(sp.train), ds.subset(sp.test)
    return fit_tree(tr, **kw), tr, te


def _best_depth2_accuracy(X, y):
    # brute force: root cut on one feature, each child cut on any feature
    cuts = [np.unique(X[:, j]) for j in range(2)]
    best = 0.0
    for f in range(2):
        for t in np.append(cuts[f], -np.inf):
            go = X[:, f] <= t
            hits = 0
            for side in (go, ~go):
                if not side.any():
                    continue
                options = [max(y[side].sum(), (1 - y[side]).sum())]
                for g in range(2):
                    xs, ys = X[side, g], y[side]
                    order = np.argsort(xs, kind="stable")
                    c1 = np.concatenate([[0], np.cumsum(ys[order])])
                    c0 = np.arange(ys.size + 1) - c1
                    tot1, tot0 = c1[-1], c0[-1]
                    ok = np.r_[True, xs[order][1:] != xs[order][:-1], True]
                    fit = np.maximum(c0, c1) + np.maximum(tot0 - c0, tot1 - c1)
                    options.append(fit[ok].max())
                hits += max(options)
            best = max(best, hits / y.size)
    return best


def test_xor_depth2_separable():
    ds = grid_ds("XOR", 0.0, 0.0, seed=1)
    assert _best_depth2_accuracy(ds.features, ds.labels) == 1.0
    model, tr, te = split_fit(ds)
    assert trees.accuracy(model, tr.features, tr.labels) >= 0.98
    assert trees.accuracy(model, te.features, te.labels) >= 0.98


def test_constant_labels_give_single_leaf():
    X = np.random.default_rng(0).normal(size=(30, 2))
    t = fit_tree(X, np.ones(30, dtype=int))
    assert t.n_nodes == 1
    np.testing.assert_array_equal(t.predict_value(X), 1.0)


def test_not_splits_on_x1_with_pure_children():
    t = fit_tree(grid_ds("NOT", 0.0, 0.0), max_depth=2)
    assert t.feature[0] == 0
    assert all(t.impurity[c] == 0 for c in (t.left[0], t.right[0]))


def test_hand_computed_split_and_importance():
    # root (2,2): x0<=2 and x1<=2.5 tie at decrease 2/3 with different subsets,
    # lowest index wins. left (2,1) is then cut purely on x1.
    X = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 5.0], [3.0, 0.0]])
    y = np.array([0, 0, 1, 1])
    t = fit_tree(X, y, max_depth=2)
    assert (t.feature[0], t.threshold[0]) == (0, 2.0)
    assert t.feature[t.left[0]] == 1 and t.ties == {}
    np.testing.assert_allclose(gini_importance(t, normalize=False), [1 / 6, 1 / 3], rtol=1e-14)


def test_unnormalized_importance_two_levels():
    # root (2,2) on f0 -> left (2,1), right (0,1); left on f1 -> (2,0), (0,1)
    t = make_tree([1, 3, -1, -1, -1], [2, 4, -1, -1, -1], [0, 1, -2, -2, -2], [0.0, 0.0, -2, -2, -2],
                  [(2, 2), (2, 1), (0, 1), (2, 0), (0, 1)], 2, 2)
    np.testing.assert_allclose(gini_importance(t, normalize=False), [1 / 6, 1 / 3], rtol=1e-14)
    np.testing.assert_allclose(gini_importance(t), [1 / 3, 2 / 3], rtol=1e-14)


def test_lowest_index_wins_exact_tie():
    # Both features carry identical information, so both root cuts tie.
    X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    y = np.array([0, 0, 1, 1])
    assert fit_tree(X, y).feature[0] == 0


def test_balanced_xor_has_no_positive_root_cut():
    pts = np.array([[-1, -1], [-1, 1], [1, -1], [1, 1]], dtype=float)
    X = np.repeat(pts, 5, axis=0)
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)
    assert fit_tree(X, y, max_depth=2).n_nodes == 1


def test_duplicate_feature_shares_credit():
    rng = np.random.default_rng(0)
    x = rng.normal(size=200)
    X = np.column_stack([x, 2 * x + 1, rng.normal(size=200)])
    y = ((x > 0) ^ (x > 1)).astype(int)
    t = fit_tree(X, y, max_depth=2)
    imp = gini_importance(t)
    assert imp[0] == pytest.approx(imp[1]) and imp[2] == 0
    assert all(v == (0, 1) for v in t.ties.values())


@pytest.mark.parametrize("fn,rho,eps,want", [("NOT", 0.0, 0.0, (1.0, 0.0)), ("NOT", 0.9, 0.0, (1.0, 0.0)),
                                             ("XOR", 1.0, 0.0, (0.5, 0.5))])
def test_gini_importance_grid(fn, rho, eps, want):
    model, _, _ = split_fit(grid_ds(fn, rho, eps), max_depth=2)
    np.testing.assert_allclose(gini_importance(model), want, atol=0.05)


def test_single_leaf_importance_zero():
    X = np.zeros((4, 3))
    assert gini_importance(fit_tree(X, [1, 1, 1, 1])).tolist() == [0, 0, 0]


def test_predict_proba_examples():
    t = make_tree([-1], [-1], [-2], [-2.0], [(0, 37)], 2)
    np.testing.assert_array_equal(predict_proba(t, [5.0, -1.0]), [0.0, 1.0])
    prior = make_tree([-1], [-1], [-2], [-2.0], [(3, 1)], 2)
    np.testing.assert_array_equal(predict_proba(prior, np.zeros((3, 2))), [[0.75, 0.25]] * 3)
    f = ForestModel((make_tree([-1], [-1], [-2], [-2.0], [(1, 0)], 2), make_tree([-1], [-1], [-2], [-2.0], [(0, 1)], 2)))
    np.testing.assert_array_equal(predict_proba(f, [0.0, 0.0]), [0.5, 0.5])
    with pytest.raises(ValueError, match="non-finite"):
        predict_proba(t, [np.nan, 0.0])


def test_forest_not_accuracy():
    ds = grid_ds("NOT", 0.0, 0.0)
    sp = data.split(ds, 0.2, 0)
    f = fit_forest(ds.subset(sp.train), n_trees=30, seed=1)
    assert trees.accuracy(f, ds.features[sp.test], ds.labels[sp.test]) == 1.0


def test_forest_degenerates_to_tree():
    ds = grid_ds("XOR", 0.1, 0.25)
    f = fit_forest(ds, n_trees=1, max_features=2, bootstrap=False, max_depth=3)
    t = fit_tree(ds, max_depth=3)
    np.testing.assert_array_equal(f.predict_value(ds.features), t.predict_value(ds.features))


def test_forest_not_better_than_tree_on_xor():
    ds = grid_ds("XOR", 0.0, 0.0)
    sp = data.split(ds, 0.2, 0)
    tr = ds.subset(sp.train)
    te_X, te_y = ds.features[sp.test], ds.labels[sp.test]
    dt = trees.accuracy(fit_tree(tr), te_X, te_y)
    rf = trees.accuracy(fit_forest(tr, n_trees=50, seed=0), te_X, te_y)
    assert rf <= dt + 0.02


def test_forest_deterministic_and_order_invariant():
    ds = grid_ds("XOR", 0.9, 0.25)
    a = fit_forest(ds, n_trees=8, seed=4)
    b = fit_forest(ds, n_trees=8, seed=4, jobs=2)
    np.testing.assert_array_equal(a.predict_value(ds.features), b.predict_value(ds.features))
    rev = ForestModel(a.trees[::-1])
    np.testing.assert_allclose(rev.predict_value(ds.features), a.predict_value(ds.features), rtol=0, atol=1e-15)


def _check_structure(t, max_depth):
    ns = t.node_samples
    for i in range(t.n_nodes):
        assert 0 <= t.impurity[i] <= 0.5
        if t.left[i] != -1:
            assert ns[t.left[i]] + ns[t.right[i]] == ns[i]
            drop = ns[i] * t.impurity[i] - ns[t.left[i]] * t.impurity[t.left[i]] - ns[t.right[i]] * t.impurity[t.right[i]]
            assert drop > 0
            assert 0 <= t.feature[i] < t.n_features
    if max_depth is not None:
        assert t.depth() <= max_depth


@given(seed=st.integers(0, 10_000), depth=st.sampled_from([1, 2, 3, None]), mss=st.integers(2, 6))
@settings(max_examples=40, deadline=None)
def test_tree_invariants(seed, depth, mss):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(60, 3)), 1)
    y = rng.integers(0, 2, 60)
    t = fit_tree(X, y, max_depth=depth, min_samples_split=mss)
    _check_structure(t, depth)
    for i in np.flatnonzero(t.left != -1):
        assert t.node_samples[i] >= mss
    imp = gini_importance(t, normalize=False)
    assert (imp >= 0).all()
    if t.n_nodes > 1:
        assert gini_importance(t).sum() == pytest.approx(1.0)
    np.testing.assert_array_equal(fit_tree(X, y, max_depth=depth, min_samples_split=mss).threshold, t.threshold)


def test_fully_grown_tree_is_one_hot_on_training_rows():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(80, 2))
    y = rng.integers(0, 2, 80)
    t = fit_tree(X, y, max_depth=None)
    np.testing.assert_array_equal(predict_proba(t, X)[:, 1], y)


def test_fit_errors():
    with pytest.raises(ValueError):
        fit_tree(np.zeros((0, 2)), np.zeros(0, dtype=int))
    with pytest.raises(ValueError):
        fit_tree(np.zeros((3, 1)), [0, 1, 0], min_samples_split=1)
    with pytest.raises(ValueError):
        fit_forest(np.zeros((3, 1)), [0, 1, 0], n_trees=0)


def test_grid_search():
    ds = grid_ds("XOR", 0.0, 0.0, n=400)
    res = trees.grid_search(ds, {"max_depth": [1, 2]}, k=10, seed=0)
    assert res.best_params == {"max_depth": 2}
    assert len(res.cells) == 2 and all(len(c[2]) == 10 for c in res.cells)
    # with mu2 = 1 most rows have X2 > 0, so one cut on X1 already gets ~0.86
    assert res.cells[0][1] < 0.9 < 0.98 < res.cells[1][1]
    single = trees.grid_search(ds, [{"max_depth": 3}], k=5)
    assert single.best_params == {"max_depth": 3}


def test_grid_search_tie_keeps_first():
    ds = grid_ds("NOT", 0.0, 0.0, n=200)
    res = trees.grid_search(ds, {"max_depth": [3, 2]}, k=4)
    assert res.cells[0][1] == res.cells[1][1]
    assert res.best_params == {"max_depth": 3}


def test_serialization_round_trip(tmp_path):
    ds = grid_ds("XOR", 0.1, 0.25)
    for model in (fit_tree(ds, max_depth=3), fit_forest(ds, n_trees=3, seed=2)):
        p = tmp_path / "m.json"
        trees.save_model(model, p, {"note": 1})
        assert trees.load_model(p).__class__ is model.__class__
        back = trees.load_model(p)
        np.testing.assert_array_equal(back.predict_value(ds.features), model.predict_value(ds.features))
    d = trees.model_to_dict(stump())
    d["format_version"] = 99
    with pytest.raises(ValueError, match="version"):
        trees.model_from_dict(d)
