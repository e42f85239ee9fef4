import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gac.complexity import ensemble_gac, ensemble_moments, gac_from_kernel
from gac.exceptions import DomainError, ShapeError, UndefinedPredictionError
from gac.smoothers import (
    DecisionTreeSmoother,
    KNNSmoother,
    RandomForestSmoother,
    fit_forest,
    fit_tree,
    knn_gac,
    knn_kernel,
    rf_kernel,
    smoother_predict,
    tree_kernel,
)


def _brute_neighbors(train, q, kappa):
    d = [(float(np.sum((t - q) ** 2)), i) for i, t in enumerate(train)]
    return sorted(i for _, i in sorted(d)[:kappa])


def test_knn_kernel_all_neighbors():
    x = np.random.default_rng(0).normal(size=(6, 2))
    assert np.array_equal(knn_kernel(x, x, 6), np.ones((6, 6)))


def test_knn_kernel_kappa_one_identity():
    x = np.random.default_rng(1).normal(size=(8, 3))
    assert np.array_equal(knn_kernel(x, x, 1), np.eye(8))


def test_knn_tie_break_lower_index():
    train = np.array([[0.0], [2.0], [1.0]])
    k = knn_kernel(train, np.array([[1.0]]), 2)
    assert np.flatnonzero(k[0]).tolist() == _brute_neighbors(train, np.array([1.0]), 2) == [0, 2]


def test_knn_kernel_matches_brute_force():
    rng = np.random.default_rng(2)
    train = rng.integers(0, 3, size=(15, 2)).astype(float)  # many ties
    query = rng.integers(0, 3, size=(5, 2)).astype(float)
    k = knn_kernel(train, query, 4)
    for i, q in enumerate(query):
        assert np.flatnonzero(k[i]).tolist() == _brute_neighbors(train, q, 4)


def test_knn_kernel_domain():
    x = np.zeros((3, 1))
    with pytest.raises(DomainError):
        knn_kernel(x, x, 0)
    with pytest.raises(DomainError):
        knn_kernel(x, x, 4)


def test_knn_gac_examples():
    assert knn_gac(1, 10) == 1
    assert knn_gac(10, 10) == 0
    assert knn_gac(5, 21) == pytest.approx(0.8)
    with pytest.raises(DomainError):
        knn_gac(3, 1)
    with pytest.raises(DomainError):
        knn_gac(11, 10)


def test_knn_gac_closed_form_all_kappa():
    x = np.random.default_rng(3).normal(size=(20, 2))
    for kappa in range(1, 21):
        assert gac_from_kernel(knn_kernel(x, x, kappa)).value == pytest.approx(
            knn_gac(kappa, 20), abs=1e-12)


def test_fit_tree_single_leaf():
    x = np.random.default_rng(4).normal(size=(9, 2))
    part = fit_tree(x, np.arange(9.0), max_leaves=1)
    assert part.n_leaves == 1
    assert sorted(part.regions[0]["members"]) == list(range(9))


def test_fit_tree_two_leaves_split():
    part = fit_tree(np.array([[0.0], [1.0], [2.0], [3.0]]), [0.0, 0.0, 1.0, 1.0], max_leaves=2)
    root = part.nodes[0]
    assert 1 < root["threshold"] < 2
    groups = sorted(sorted(int(i) for i in r["members"]) for r in part.regions)
    assert groups == [[0, 1], [2, 3]]


def test_fit_tree_full_interpolation():
    rng = np.random.default_rng(5)
    x = rng.permutation(10).astype(float)[:, None]
    y = rng.permutation(10).astype(float)
    part = fit_tree(x, y, max_leaves=10)
    assert part.n_leaves == 10
    assert np.array_equal(tree_kernel(part), np.eye(10))


def test_fit_tree_empty():
    with pytest.raises(ShapeError):
        fit_tree(np.zeros((0, 2)), np.zeros(0), max_leaves=2)


def test_partition_invariants_and_json():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(30, 3))
    part = fit_tree(x, rng.normal(size=30), max_leaves=6)
    members = np.concatenate([r["members"] for r in part.regions])
    assert sorted(members.tolist()) == list(range(30))
    assert all(len(r["members"]) >= 1 for r in part.regions)
    assert np.array_equal(part.apply(x), part.leaf_of)
    doc = json.loads(part.to_json())
    assert len(doc["regions"]) == 6


def test_tree_kernel_examples():
    part = fit_tree(np.array([[0.0], [1.0], [2.0], [3.0]]), [0.0, 0.0, 1.0, 1.0], max_leaves=2)
    k = tree_kernel(part)
    assert k.sum() == 8
    assert gac_from_kernel(k).value == pytest.approx(2 / 3)
    one = fit_tree(np.arange(4.0)[:, None], np.zeros(4), max_leaves=4)
    assert np.array_equal(tree_kernel(one), np.ones((4, 4)))


def test_tree_growth_strictly_increases_gac():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(40, 2))
    m = DecisionTreeSmoother(max_leaves=40, record_history=True).fit(x, rng.normal(size=40))
    g = m.growth_gacs()
    assert g[0] == 0 and g[-1] == 1
    assert all(b > a for a, b in zip(g, g[1:]))


def test_rf_single_tree_is_row_normalized_tree_kernel():
    rng = np.random.default_rng(8)
    x, y = rng.normal(size=(25, 2)), rng.normal(size=25)
    forest = fit_forest(x, y, 1, max_leaves=5, random_state=0)
    k = tree_kernel(forest.trees[0])
    assert np.allclose(rf_kernel(forest), k / k.sum(1, keepdims=True), atol=1e-15)


def test_rf_identical_trees_double():
    rng = np.random.default_rng(9)
    x, y = rng.normal(size=(20, 2)), rng.normal(size=20)
    forest = fit_forest(x, y, 2, max_leaves=4, random_state=0)
    one = fit_forest(x, y, 1, max_leaves=4, random_state=0)
    assert np.allclose(rf_kernel(forest), 2 * rf_kernel(one), atol=1e-15)


@pytest.mark.parametrize("bootstrap", [False, True])
def test_rf_row_sums(bootstrap):
    rng = np.random.default_rng(10)
    x, y = rng.normal(size=(40, 3)), rng.normal(size=40)
    forest = fit_forest(x, y, 7, max_leaves=6, bootstrap=bootstrap, max_features=1,
                        random_state=1)
    assert np.all(forest.bootstrap_counts.sum(1) == 40)
    k = rf_kernel(forest)
    assert np.all(k >= 0)
    assert np.max(np.abs(k.sum(1) - 7)) <= 1e-12
    q = rf_kernel(forest, forest.apply(rng.normal(size=(9, 3))))
    assert np.max(np.abs(q.sum(1) - 7)) <= 1e-12


def test_forest_identical_trees_gac_equals_tree():
    rng = np.random.default_rng(11)
    x, y = rng.normal(size=(30, 2)), rng.normal(size=30)
    rf = RandomForestSmoother(n_estimators=5, max_leaves=6, random_state=0).fit(x, y)
    dt = DecisionTreeSmoother(max_leaves=6).fit(x, y)
    assert abs(rf.complexity().value - dt.complexity().value) <= 1e-12
    s = ensemble_moments(rf.tree_kernels())
    assert s.rho == 1.0 and ensemble_gac(s) == pytest.approx(dt.complexity().value, abs=1e-12)


def test_forest_parallel_matches_serial():
    rng = np.random.default_rng(12)
    x, y = rng.normal(size=(30, 2)), rng.normal(size=30)
    a = fit_forest(x, y, 4, max_leaves=5, bootstrap=True, random_state=3, n_jobs=1)
    b = fit_forest(x, y, 4, max_leaves=5, bootstrap=True, random_state=3, n_jobs=2)
    assert np.array_equal(rf_kernel(a), rf_kernel(b))


def test_smoother_predict_examples():
    assert smoother_predict([0, 0, 1, 0], [5.0, 6.0, 7.0, 8.0]) == 7
    assert smoother_predict([1, 1], [1.0, 3.0]) == 2
    with pytest.raises(UndefinedPredictionError):
        smoother_predict([0, 0], [1.0, 2.0])


def test_knn_all_neighbors_predicts_mean():
    rng = np.random.default_rng(13)
    x, y = rng.normal(size=(12, 2)), rng.normal(size=12)
    m = KNNSmoother(n_neighbors=12).fit(x, y)
    assert np.allclose(m.predict(rng.normal(size=(3, 2))), y.mean())


def test_estimator_smoother_matrices_rows_stochastic():
    rng = np.random.default_rng(14)
    x, y = rng.normal(size=(20, 2)), rng.normal(size=20)
    xt = rng.normal(size=(6, 2))
    for m in (KNNSmoother(3), DecisionTreeSmoother(max_leaves=5),
              RandomForestSmoother(4, max_leaves=5, bootstrap=True, random_state=0)):
        m.fit(x, y)
        s = m.smoother_matrices(xt)
        assert np.allclose(s.s_in.sum(1), 1) and np.allclose(s.s_out.sum(1), 1)
        assert np.allclose(s.s_out @ y, m.predict(xt))
        assert 0 <= m.complexity().value <= 1


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 25), st.integers(0, 2**31 - 1))
def test_knn_closed_form_property(n, seed):
    x = np.random.default_rng(seed).normal(size=(n, 2))
    kappa = int(np.random.default_rng(seed + 1).integers(1, n + 1))
    assert gac_from_kernel(knn_kernel(x, x, kappa)).value == pytest.approx(knn_gac(kappa, n),
                                                                           abs=1e-12)
