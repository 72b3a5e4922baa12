import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsrr.classifiers import (
    forest_fit,
    forest_predict,
    knn_fit,
    knn_predict,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
    tree_fit,
    tree_predict,
)
from dsrr.errors import ParameterError

from .oracles import best_depth2_accuracy, knn_bruteforce

XOR_X = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=float)
XOR_Y = np.array(["A", "A", "B", "B"])


def blobs(seed, n_per=150, dim=4, gap=3.0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(0, 1, (n_per, dim)), rng.normal(gap, 1, (n_per, dim))])
    y = np.array(["a"] * n_per + ["b"] * n_per)
    p = rng.permutation(2 * n_per)
    return X[p], y[p]


class TestKnn:
    def test_query_on_training_point(self):
        X, y = blobs(0, 20)
        model = knn_fit(X, y, 1)
        assert knn_predict(model, X[5:6])[0] == y[5]

    def test_three_neighbours(self):
        model = knn_fit([[0, 0], [0, 1], [5, 5]], ["A", "A", "B"], 3)
        assert knn_predict(model, [[0, 0.4]]).tolist() == ["A"]

    def test_k_too_large(self):
        with pytest.raises(ParameterError):
            knn_fit([[0], [1], [2]], ["a", "b", "a"], 4)

    def test_self_accuracy_k1(self):
        X, y = blobs(1)
        assert (knn_predict(knn_fit(X, y, 1), X) == y).all()

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(2)
        X = rng.integers(0, 4, (40, 3)).astype(float)
        y = rng.choice(["p", "q", "r"], 40)
        model = knn_fit(X, y, 5)
        Q = rng.integers(0, 4, (30, 3)).astype(float)
        expected = [knn_bruteforce(X.tolist(), y.tolist(), q, 5, model.scale.tolist()) for q in Q.tolist()]
        assert knn_predict(model, Q).tolist() == expected

    def test_distance_tie_prefers_lower_index(self):
        model = knn_fit([[1.0], [-1.0]], ["z", "a"], 1)
        assert knn_predict(model, [[0.0]]).tolist() == ["z"]

    def test_constant_feature_scale(self):
        model = knn_fit([[1, 3], [2, 3], [3, 3]], ["a", "b", "c"], 1)
        assert model.scale[1] == 1.0


class TestTree:
    def test_single_class(self):
        tree = tree_fit(np.random.default_rng(0).standard_normal((10, 2)), ["x"] * 10)
        assert tree.n_nodes == 1
        assert tree.predict([[100, -100]]).tolist() == ["x"]

    def test_single_sample(self):
        tree = tree_fit([[1.0, 2.0]], ["only"])
        assert tree.n_nodes == 1

    def test_xor_depth_two(self):
        assert best_depth2_accuracy(XOR_X.tolist(), XOR_Y.tolist()) == 1.0
        tree = tree_fit(XOR_X, XOR_Y, max_depth=2)
        assert (tree_predict(tree, XOR_X) == XOR_Y).all()
        assert tree.depth == 2

    def test_xor_depth_one_cannot(self):
        tree = tree_fit(XOR_X, XOR_Y, max_depth=1)
        assert (tree_predict(tree, XOR_X) == XOR_Y).mean() < 1.0

    def test_tie_break_lower_feature_then_threshold(self):
        # both features separate the classes perfectly; feature 0 must win
        X = np.array([[0, 0], [1, 1], [2, 2], [3, 3]], float)
        tree = tree_fit(X, ["a", "a", "b", "b"])
        assert tree.feature[0] == 0 and tree.threshold[0] == 1.5

    def test_midpoint_thresholds(self):
        tree = tree_fit([[0.0], [10.0]], ["a", "b"])
        assert tree.threshold[0] == 5.0

    def test_min_leaf(self):
        X = np.arange(10.0)[:, None]
        y = ["a"] + ["b"] * 9
        assert tree_fit(X, y, min_leaf=1).n_nodes == 3
        assert tree_fit(X, y, min_leaf=2).feature[0] == 0
        tree = tree_fit(X, y, min_leaf=2)
        assert tree.counts[tree.left[0]].sum() >= 2

    def test_empty(self):
        with pytest.raises(ParameterError):
            tree_fit(np.zeros((0, 2)), [])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(5, 60), st.integers(1, 4))
    def test_unlimited_depth_fits_consistent_data(self, seed, n, d):
        rng = np.random.default_rng(seed)
        X = rng.integers(0, 5, (n, d)).astype(float)
        _, first = np.unique(X, axis=0, return_inverse=True)
        y = rng.choice(["a", "b", "c"], first.max() + 1)[first.ravel()]
        assert (tree_fit(X, y).predict(X) == y).all()


class TestForest:
    def test_separable_blobs(self):
        X, y = blobs(3, 150)
        model = forest_fit(X[:200], y[:200], 50, master_seed=5)
        assert (forest_predict(model, X[200:]) == y[200:]).mean() >= 0.95

    def test_same_seed_identical(self):
        X, y = blobs(4, 60, gap=1.0)
        Q = np.random.default_rng(9).normal(0.5, 2, (300, 4))
        a = forest_fit(X, y, 20, master_seed=7)
        b = forest_fit(X, y, 20, master_seed=7)
        assert (forest_predict(a, Q) == forest_predict(b, Q)).all()
        assert model_to_dict(a) == model_to_dict(b)

    def test_different_seed_differs(self):
        X, y = blobs(4, 60, gap=1.0)
        assert model_to_dict(forest_fit(X, y, 5, master_seed=1)) != model_to_dict(forest_fit(X, y, 5, master_seed=2))

    def test_degenerate_forest_is_a_tree(self):
        X, y = blobs(5, 80, gap=1.0)
        forest = forest_fit(X, y, 1, master_seed=3, max_features=None, bootstrap=False)
        tree = tree_fit(X, y)
        for key in ("feature", "threshold", "left", "right", "counts"):
            np.testing.assert_array_equal(getattr(forest.trees[0], key), getattr(tree, key))

    def test_features_per_split(self):
        X, y = blobs(6, 30, dim=10)
        assert forest_fit(X, y, 2).max_features == 4

    def test_row_permutation_invariance(self):
        X, y = blobs(7, 80, gap=1.0)
        Q = np.random.default_rng(1).normal(0.5, 2, (200, 4))
        p = np.random.default_rng(2).permutation(len(y))
        a = forest_fit(X, y, 15, master_seed=4, bootstrap=False)
        b = forest_fit(X[p], y[p], 15, master_seed=4, bootstrap=False)
        assert (forest_predict(a, Q) == forest_predict(b, Q)).all()

    def test_vote_tie_goes_to_smaller_label(self):
        X = np.array([[0.0], [1.0]])
        model = forest_fit(X, ["b", "a"], 2, master_seed=0, bootstrap=False)
        model.trees[1].counts[:] = model.trees[1].counts[:, ::-1]
        assert forest_predict(model, [[0.0]]).tolist() == ["a"]

    def test_bad_tree_count(self):
        with pytest.raises(ParameterError):
            forest_fit([[0.0], [1.0]], ["a", "b"], 0)


@pytest.mark.parametrize("learner", ["knn", "tree", "forest"])
def test_relabeling_commutes(learner):
    X, y = blobs(8, 50, gap=2.0)
    Q = np.random.default_rng(3).normal(1, 1.5, (100, 4))
    for mapping in ({"a": "VPN", "b": "Web"}, {"a": "z", "b": "y"}):
        y2 = np.array([mapping[v] for v in y])
        if learner == "knn":
            p1, p2 = knn_predict(knn_fit(X, y, 1), Q), knn_predict(knn_fit(X, y2, 1), Q)
        elif learner == "tree":
            p1, p2 = tree_fit(X, y).predict(Q), tree_fit(X, y2).predict(Q)
        else:
            p1 = forest_predict(forest_fit(X, y, 11, master_seed=1), Q)
            p2 = forest_predict(forest_fit(X, y2, 11, master_seed=1), Q)
        assert [mapping[v] for v in p1] == p2.tolist()


@pytest.mark.parametrize("kind", ["knn", "tree", "forest"])
def test_json_round_trip(kind, tmp_path):
    X, y = blobs(9, 40)
    model = {"knn": lambda: knn_fit(X, y, 3), "tree": lambda: tree_fit(X, y), "forest": lambda: forest_fit(X, y, 5)}[kind]()
    path = tmp_path / "m.json"
    save_model(model, path, ["f0", "f1", "f2", "f3"])
    loaded, names = load_model(path)
    assert names == ["f0", "f1", "f2", "f3"]
    assert (loaded.predict(X) == model.predict(X)).all()
    assert model_to_dict(model_from_dict(model_to_dict(model))) == model_to_dict(model)
