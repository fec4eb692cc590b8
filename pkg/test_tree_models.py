import math

import numpy as np
import pytest
import scipy.sparse as sp

from errors import BoostError, FitError, ShapeError
from tree_models import (
    BoostConfig,
    DecisionTree,
    ForestConfig,
    Leaf,
    Split,
    TreeConfig,
    best_split,
    gini,
    samme_alpha,
    train_adaboost,
    train_decision_tree,
    train_random_forest,
)
from vectorizer import SparseVector

FOUR_X = np.array([[0.0, 0.3], [0.0, 0.7], [1.0, 0.3], [1.0, 0.7]])
FOUR_Y = [0, 0, 1, 1]


def _brute_force_split(X, y):
    """Exhaustive (feature, threshold, impurity), lowest feature then threshold on ties."""
    n = len(y)
    best = None
    for f in range(X.shape[1]):
        values = np.unique(X[:, f])
        for lo, hi in zip(values[:-1], values[1:]):
            t = (lo + hi) / 2.0
            left = [y[i] for i in range(n) if X[i, f] <= t]
            right = [y[i] for i in range(n) if X[i, f] > t]
            impurity = (
                len(left) * gini(np.bincount(left, minlength=3))
                + len(right) * gini(np.bincount(right, minlength=3))
            ) / n
            if best is None or impurity < best[2] - 1e-12:
                best = (f, t, impurity)
    return best


# --- Decision tree ---

def test_gini():
    assert gini([2, 2, 0]) == 0.5
    assert gini([5, 0, 0]) == 0.0
    assert gini([0, 0, 0]) == 0.0


def test_four_point_split():
    tree = train_decision_tree(FOUR_X, FOUR_Y)
    assert isinstance(tree.root, Split)
    assert tree.root.feature == 0
    assert tree.root.threshold == 0.5
    assert isinstance(tree.root.left, Leaf) and isinstance(tree.root.right, Leaf)
    np.testing.assert_array_equal(tree.predict(FOUR_X), FOUR_Y)


def test_single_label_is_a_leaf():
    tree = train_decision_tree(FOUR_X, [2, 2, 2, 2])
    assert isinstance(tree.root, Leaf)
    np.testing.assert_array_equal(tree.predict(FOUR_X), [2, 2, 2, 2])


def test_leaf_ties_go_to_lowest_class():
    assert Leaf(counts=np.array([0.0, 2.0, 2.0])).label == 1


@pytest.mark.parametrize("seed", range(40))
def test_root_split_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    v = int(rng.integers(1, 4))
    X = rng.integers(0, 4, size=(n, v)) / 4.0
    y = rng.integers(0, 3, size=n)
    expected = _brute_force_split(X, y)
    found = best_split(X, y)
    if expected is None:
        assert found is None
        return
    assert found[0] == expected[0]
    assert found[1] == pytest.approx(expected[1])
    assert found[2] == pytest.approx(expected[2], abs=1e-9)


def test_min_samples_leaf_limits_splits():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    assert best_split(X, [0, 1, 1, 1], min_samples_leaf=2)[1] == 1.5
    assert best_split(X, [0, 1, 1, 1], min_samples_leaf=3) is None


def test_fits_any_consistent_dataset(rng):
    X = rng.uniform(size=(80, 6))
    y = rng.integers(0, 3, size=80)
    tree = train_decision_tree(X, y)
    np.testing.assert_array_equal(tree.predict(X), y)


def test_max_depth_is_respected(rng):
    X = rng.uniform(size=(80, 6))
    y = rng.integers(0, 3, size=80)
    assert train_decision_tree(X, y, TreeConfig(max_depth=2)).depth <= 2


def test_sparse_rows_read_absent_entries_as_zero():
    dense = np.array([[0.0, 0.4], [0.0, 0.0], [0.35, 0.0], [0.9, 0.1]])
    tree = train_decision_tree(sp.csr_matrix(dense), [1, 1, 0, 0])
    assert tree.root.feature == 0
    assert tree.root.threshold == pytest.approx(0.175)
    np.testing.assert_array_equal(tree.predict(dense), [1, 1, 0, 0])


def test_tree_record_round_trip(rng):
    X = rng.uniform(size=(60, 4))
    y = rng.integers(0, 3, size=60)
    tree = train_decision_tree(X, y)
    restored = DecisionTree.from_dict(tree.to_dict())
    np.testing.assert_array_equal(restored.predict(X), tree.predict(X))
    assert restored.leaf_count == tree.leaf_count


# --- Random forest ---

def test_degenerate_forest_equals_tree(rng):
    X = rng.uniform(size=(50, 5))
    y = rng.integers(0, 3, size=50)
    forest = train_random_forest(X, y, ForestConfig(n_trees=1, bootstrap=False, max_features="all"))
    tree = train_decision_tree(X, y)
    np.testing.assert_array_equal(forest.predict(X), tree.predict(X))


def test_forest_is_deterministic_and_thread_count_free(rng):
    X = rng.uniform(size=(60, 9))
    y = rng.integers(0, 3, size=60)
    a = train_random_forest(X, y, ForestConfig(n_trees=8, seed=5))
    b = train_random_forest(X, y, ForestConfig(n_trees=8, seed=5))
    c = train_random_forest(X, y, ForestConfig(n_trees=8, seed=5, n_jobs=4))
    assert a.to_dict() == b.to_dict() == c.to_dict()


def test_forest_vote_ignores_tree_order(rng):
    X = rng.uniform(size=(40, 4))
    y = rng.integers(0, 3, size=40)
    forest = train_random_forest(X, y, ForestConfig(n_trees=6, seed=2))
    votes = forest.votes(X)
    forest.trees.reverse()
    np.testing.assert_array_equal(forest.votes(X), votes)
    assert (votes.sum(axis=1) == 6).all()


def test_pure_labels_give_unanimous_leaves():
    forest = train_random_forest(FOUR_X, [1, 1, 1, 1], ForestConfig(n_trees=3))
    assert all(isinstance(tree.root, Leaf) for tree in forest.trees)
    np.testing.assert_array_equal(forest.votes(FOUR_X)[:, 1], 3)


# --- AdaBoost ---

def test_samme_alpha():
    assert samme_alpha(0.25, 2) == pytest.approx(math.log(3))
    assert samme_alpha(0.25, 3) == pytest.approx(math.log(3) + math.log(2))


def test_perfect_stage_stops_boosting():
    ensemble = train_adaboost(FOUR_X, FOUR_Y, BoostConfig(n_stages=10))
    assert len(ensemble.stages) == 1
    assert ensemble.stages[0][1] == samme_alpha(1e-10, 2)
    np.testing.assert_array_equal(ensemble.predict(FOUR_X), FOUR_Y)


def test_staged_training_error_does_not_increase():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 1, 1, 0])
    ensemble = train_adaboost(X, y, BoostConfig(n_stages=3))
    alphas = [alpha for _, alpha in ensemble.stages]
    assert alphas == pytest.approx([math.log(3), math.log(5), math.log(4)])
    errors = [float(np.mean(p != y)) for p in ensemble.staged_predict(X)]
    assert errors == [0.25, 0.25, 0.0]
    assert all(b <= a for a, b in zip(errors, errors[1:]))


def test_chance_level_first_stage_raises():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(BoostError):
        train_adaboost(X, [0, 0, 1, 1])


def test_boosting_needs_two_classes():
    with pytest.raises(FitError):
        train_adaboost(FOUR_X, [0, 0, 0, 0])


def test_every_alpha_is_finite(separable_corpus):
    X = np.array([[len(d.text) % 7, d.text.count(" ")] for d in separable_corpus], dtype=float)
    y = [d.label for d in separable_corpus]
    ensemble = train_adaboost(X, y, BoostConfig(n_stages=5, base_depth=2))
    assert ensemble.stages
    assert all(np.isfinite(alpha) for _, alpha in ensemble.stages)


@pytest.mark.parametrize("train", [
    train_decision_tree,
    lambda X, y: train_random_forest(X, y, ForestConfig(n_trees=3)),
    train_adaboost,
])
def test_out_of_range_feature_index(train):
    model = train(FOUR_X, FOUR_Y)
    with pytest.raises(ShapeError):
        model.predict([SparseVector(np.array([2]), np.array([1.0]))])
