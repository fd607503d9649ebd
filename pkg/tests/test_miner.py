import logging

import numpy as np
import pytest

from rcpd import miner
from rcpd.errors import MinerError
from rcpd.rules import RuleSet, StepRule
from rcpd.synth import WindowSet

GRID = np.array([1, 2, 3, 4, 5, 6, 8, 10, 20, 50, 100, 400, 1024])


def window_set(X, y, per_trace=10):
    n = len(y)
    tix = np.arange(n) // per_trace
    six = np.arange(n) % per_trace
    y = np.asarray(y, dtype=bool)
    rcp = np.full(tix.max() + 1, -100, dtype=np.int64)
    for i in np.flatnonzero(y):
        rcp[tix[i]] = six[i]
    return WindowSet(np.asarray(X, dtype=np.int64), y, tix, six, [], rcp)


def separable(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.choice(GRID, size=(n, 6))
    return window_set(X, X[:, 0] <= 5)


def test_separable_single_stump():
    model = miner.train(separable(), depth=1, n_trees=1)
    tree = model.trees[0]
    assert tree.feature[0] == 0
    assert 5 <= tree.threshold[0] < 6 and tree.bound[0] == 5
    assert model.importance == [100.0, 0.0, 0.0, 0.0, 0.0, 0.0]


def test_separable_distills_rule_one():
    model = miner.train(separable(), depth=3, n_trees=20)
    assert model.importance[0] == pytest.approx(100.0)
    rules = miner.distill_rules(model, 4)
    assert len(rules) == 1
    r = rules.rules[0]
    assert (r.current_threshold, r.history_thresholds) == (5, ())


def test_dominated_rule_removed():
    a = StepRule("a", 5)
    b = StepRule("b", 5, ((1, 50),))
    assert miner.dominates(a, b) and not miner.dominates(b, a)
    assert miner.prune_dominated([a, b]) == [a]
    assert miner.prune_dominated([b, a]) == [a]


def test_path_to_rule_keeps_upper_bounds():
    conds = [(0, True, 9), (2, False, 30), (1, True, 40), (0, True, 7)]
    r = miner.path_to_rule(conds, "x")
    assert r == StepRule("x", 7, ((1, 40),))
    assert miner.path_to_rule([(3, False, 9)], "y") is None


def test_random_labels_spread_importance():
    rng = np.random.default_rng(123)
    for rep in range(10):
        X = rng.choice(GRID, size=(1500, 6))
        y = rng.random(1500) < 0.1
        model = miner.train(window_set(X, y), seed=rep, n_trees=20)
        assert max(model.importance) <= 60.0


def test_row_order_does_not_matter():
    ws = separable(600, seed=3)
    rng = np.random.default_rng(9)
    y = ws.y.copy()
    y[rng.choice(600, 40, replace=False)] ^= True
    ws = window_set(ws.X, y)
    perm = rng.permutation(600)
    a = miner.train(ws, n_trees=10)
    b = miner.train(window_set(ws.X[perm], y[perm]), n_trees=10)
    assert a.importance == b.importance
    assert [t.to_dict() for t in a.trees] == [t.to_dict() for t in b.trees]


def test_seeded_subsample_is_deterministic():
    ws = separable(800)
    a = miner.train(ws, subsample=0.5, seed=4, n_trees=5)
    b = miner.train(ws, subsample=0.5, seed=4, n_trees=5)
    assert [t.to_dict() for t in a.trees] == [t.to_dict() for t in b.trees]


def test_training_errors():
    ws = separable(100)
    with pytest.raises(MinerError):
        miner.train(window_set(ws.X, np.zeros(100, bool)))
    with pytest.raises(MinerError):
        miner.train(ws, depth=0)
    with pytest.raises(MinerError):
        miner.train(window_set(ws.X[:, :5], ws.y))


def test_no_positive_leaf_gives_empty_rules(caplog):
    model = miner.train(separable(200), n_trees=1, depth=1)
    for tree in model.trees:
        tree.pos_weight = [0.0] * len(tree.pos_weight)
    with caplog.at_level(logging.WARNING):
        rules = miner.distill_rules(model, 4)
    assert rules == RuleSet(())
    assert "empty" in caplog.text


def test_prf_degenerate_when_nothing_predicted():
    m = miner.prf([True, False, True], [False, False, False])
    assert m.precision == 0.0 and m.degenerate and m.f1 == 0.0


def test_cross_validation_on_separable_data():
    cv = miner.cross_validate(separable(1500), folds=5, seed=1, n_trees=10)
    assert cv.mean_f1 == 1.0
    assert len(cv.folds) == 5


def test_fold_assignment_is_deterministic_and_balanced():
    a = miner.fold_assignment(103, 5, 7)
    assert np.array_equal(a, miner.fold_assignment(103, 5, 7))
    assert np.bincount(a).max() - np.bincount(a).min() <= 1


def test_too_few_positives_for_folds():
    X = np.random.default_rng(0).choice(GRID, size=(50, 6))
    y = np.zeros(50, bool)
    y[:3] = True
    with pytest.raises(MinerError, match="folds"):
        miner.cross_validate(window_set(X, y), folds=5)


def test_synthetic_shape_and_cv(windows500):
    model = miner.train(windows500)
    imp = model.importance
    assert imp[0] == max(imp)
    assert imp[1] == max(imp[1:])
    cv = miner.cross_validate(windows500, folds=5, seed=0)
    assert cv.mean_tolerant_recall >= 0.8


def test_first_fire_mask_keeps_earliest():
    ws = window_set(np.ones((6, 6)), [False, True, False, False, True, False], per_trace=3)
    fired = np.array([False, True, True, True, True, True])
    assert miner.first_fire_mask(fired, ws).tolist() == [False, True, False, True, False, False]
