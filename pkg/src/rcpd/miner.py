"""Gradient-boosted threshold trees over rank windows, and rule distillation.

Trees are fit to the logistic-loss pseudo-residual ``y - p`` by weighted
least-squares splits; leaves take a Newton step. Splits are on integer
ranks: the left child holds ``rank <= bound``. Candidate thresholds sit
between consecutive observed values in the transformed feature space
(``log2(rank)`` by default), which decides where unseen ranks fall.

Training data is put into a canonical row order first, so the fitted model
does not depend on the order windows arrive in.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import MinerError
from .rules import HISTORY_LEN, RuleSet, StepRule
from .synth import WindowSet
from .trace_model import RANK_CAP

log = logging.getLogger(__name__)

N_FEATURES = HISTORY_LEN + 1
MIN_REL_GAIN = 1e-9
FEATURE_NAMES = ("r0",) + tuple(f"r{k}" for k in range(1, N_FEATURES))


@dataclass
class Tree:
    """Flat binary tree. ``feature[i] == -1`` marks a leaf.

    ``threshold`` is the split point in rank space (between two observed
    ranks); ``bound`` is its integer floor, the largest rank sent left.
    """

    feature: list[int] = field(default_factory=list)
    bound: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)
    gain: list[float] = field(default_factory=list)
    pos_weight: list[float] = field(default_factory=list)
    neg_weight: list[float] = field(default_factory=list)
    depth: list[int] = field(default_factory=list)

    def _add(self, depth):
        for lst, v in (
            (self.feature, -1), (self.bound, 0), (self.threshold, 0.0), (self.left, -1),
            (self.right, -1), (self.value, 0.0), (self.gain, 0.0), (self.pos_weight, 0.0),
            (self.neg_weight, 0.0), (self.depth, depth),
        ):
            lst.append(v)
        return len(self.feature) - 1

    @property
    def max_depth(self) -> int:
        return max(self.depth)

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.float64)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            f = self.feature[node]
            if f < 0:
                out[rows] = self.value[node]
                continue
            go_left = X[rows, f] <= self.bound[node]
            stack.append((self.left[node], rows[go_left]))
            stack.append((self.right[node], rows[~go_left]))
        return out

    def paths(self):
        """Yield ``(leaf, [(feature, is_upper, bound), ...], path_gain)``."""
        stack = [(0, [], 0.0)]
        while stack:
            node, conds, g = stack.pop()
            f = self.feature[node]
            if f < 0:
                yield node, conds, g
                continue
            g2 = g + self.gain[node]
            stack.append((self.right[node], conds + [(f, False, self.bound[node])], g2))
            stack.append((self.left[node], conds + [(f, True, self.bound[node])], g2))

    def to_dict(self) -> dict:
        return {k: list(getattr(self, k)) for k in self.__dataclass_fields__}


@dataclass
class MinedModel:
    trees: list[Tree]
    learning_rate: float
    base_score: float
    importance: list[float]
    raw_gain: list[float]
    max_depth: int
    log_transform: bool
    distilled_rules: RuleSet = field(default_factory=lambda: RuleSet(()))
    cap: int = RANK_CAP

    def decision_function(self, X) -> np.ndarray:
        X = _prepare(X, self.cap)
        score = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            score += self.learning_rate * tree.predict(X)
        return score

    def predict_proba(self, X) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.decision_function(X)))

    def predict(self, X) -> np.ndarray:
        return self.decision_function(X) >= 0.0

    def importance_table(self) -> str:
        return "\n".join(f"{n}\t{v:.2f}" for n, v in zip(FEATURE_NAMES, self.importance)) + "\n"


def _prepare(X, cap) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise MinerError(f"expected (n, {N_FEATURES}) rank windows, got shape {X.shape}")
    if np.issubdtype(X.dtype, np.floating):
        if np.isnan(X).any():
            raise MinerError("NaN in features")
        X = np.rint(X)
    X = X.astype(np.int64)
    if (X < 1).any():
        raise MinerError("ranks must be >= 1")
    return np.minimum(X, cap)


def _transform(v, log_transform):
    v = np.asarray(v, dtype=np.float64)
    return np.log2(v) if log_transform else v


def _inverse(t, log_transform):
    return 2.0 ** t if log_transform else t


def train(
    windows: WindowSet,
    depth: int = 3,
    n_trees: int = 50,
    learning_rate: float = 0.1,
    seed: int = 0,
    *,
    log_transform: bool = True,
    pos_weight: float | None = None,
    min_leaf: int = 5,
    l2: float = 1.0,
    subsample: float = 1.0,
    cap: int = RANK_CAP,
) -> MinedModel:
    """Fit a boosted ensemble; deterministic for a fixed ``seed``.

    ``pos_weight`` defaults to negatives/positives. ``subsample < 1`` draws
    a seeded row subset per tree.
    """
    if not 1 <= depth <= 6:
        raise MinerError("depth must lie in [1, 6]")
    if n_trees < 1:
        raise MinerError("n_trees must be >= 1")
    if not 0.0 < subsample <= 1.0:
        raise MinerError("subsample must lie in (0, 1]")
    X = _prepare(windows.X, cap)
    y = np.asarray(windows.y, dtype=bool)
    if X.shape[0] != y.shape[0]:
        raise MinerError("feature/label length mismatch")
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MinerError("training data must contain both classes")

    # canonical order: the model is a function of the multiset of rows
    order = np.lexsort((y,) + tuple(X[:, f] for f in range(N_FEATURES - 1, -1, -1)))
    X, y = X[order], y[order]
    yf = y.astype(np.float64)

    pw = n_neg / n_pos if pos_weight is None else float(pos_weight)
    w = np.where(y, pw, 1.0)

    uniq = [np.unique(X[:, f]) for f in range(N_FEATURES)]
    codes = np.stack([np.searchsorted(uniq[f], X[:, f]) for f in range(N_FEATURES)], axis=1).astype(np.int32)
    n_bins = max(len(u) for u in uniq)

    base = math.log((w * yf).sum() / (w * (1 - yf)).sum())
    F = np.full(X.shape[0], base)
    rng = np.random.default_rng(seed)
    all_rows = np.arange(X.shape[0], dtype=np.int64)
    trees = []
    gain_by_feature = np.zeros(N_FEATURES)

    for _ in range(n_trees):
        p = 1.0 / (1.0 + np.exp(-F))
        resid = yf - p
        hess = p * (1.0 - p)
        if subsample < 1.0:
            k = max(2, int(round(subsample * X.shape[0])))
            rows = np.sort(rng.choice(all_rows, size=k, replace=False))
        else:
            rows = all_rows
        tree = Tree()
        _grow(tree, 0, rows, codes, X, resid, hess, w, yf, uniq, n_bins, depth, min_leaf, l2, log_transform)
        for f, g in zip(tree.feature, tree.gain):
            if f >= 0:
                gain_by_feature[f] += g
        trees.append(tree)
        F += learning_rate * tree.predict(X)

    total = gain_by_feature.sum()
    if total > 0:
        # divide first so a single-feature model gives exactly 100
        importance = (gain_by_feature / total * 100.0).tolist()
    else:
        importance = [100.0 / N_FEATURES] * N_FEATURES
        log.warning("no split improved the loss; importance is uniform")
    return MinedModel(
        trees=trees,
        learning_rate=learning_rate,
        base_score=base,
        importance=importance,
        raw_gain=gain_by_feature.tolist(),
        max_depth=depth,
        log_transform=log_transform,
        cap=cap,
    )


def _grow(tree, d, rows, codes, X, resid, hess, w, yf, uniq, n_bins, max_depth, min_leaf, l2, log_transform):
    node = tree._add(d)
    wr = w[rows]
    tree.pos_weight[node] = float((wr * yf[rows]).sum())
    tree.neg_weight[node] = float((wr * (1.0 - yf[rows])).sum())
    tree.value[node] = float((wr * resid[rows]).sum() / ((wr * hess[rows]).sum() + l2))
    if d >= max_depth or rows.size < 2 * min_leaf:
        return node
    gain, f, b = kernels.best_split(codes, rows, resid, w, n_bins, min_leaf)
    # gains at rounding level are not structure; the floor scales with the node's total
    floor = MIN_REL_GAIN * float((wr * resid[rows] ** 2).sum())
    if f < 0 or gain <= floor:
        return node
    vals = uniq[f]
    lo_v, hi_v = float(vals[b]), float(vals[b + 1])
    t = 0.5 * (_transform(lo_v, log_transform) + _transform(hi_v, log_transform))
    bound = int(math.floor(_inverse(t, log_transform) + 1e-9))
    bound = min(max(bound, int(lo_v)), int(hi_v) - 1)
    tree.feature[node] = f
    tree.bound[node] = bound
    tree.threshold[node] = float(_inverse(t, log_transform))
    tree.gain[node] = float(gain)
    go_left = codes[rows, f] <= b
    tree.left[node] = _grow(tree, d + 1, rows[go_left], codes, X, resid, hess, w, yf, uniq, n_bins,
                            max_depth, min_leaf, l2, log_transform)
    tree.right[node] = _grow(tree, d + 1, rows[~go_left], codes, X, resid, hess, w, yf, uniq, n_bins,
                             max_depth, min_leaf, l2, log_transform)
    return node


# -- rule distillation ------------------------------------------------------------


def _rule_key(rule: StepRule):
    return (rule.current_threshold, tuple(sorted(rule.history_thresholds)))


def dominates(a: StepRule, b: StepRule) -> bool:
    """True if every window firing ``b`` also fires ``a`` (``b`` is redundant)."""
    if b.current_threshold > a.current_threshold:
        return False
    b_hist = dict(b.history_thresholds)
    for offset, thr in a.history_thresholds:
        if offset not in b_hist or b_hist[offset] > thr:
            return False
    return True


def prune_dominated(rules) -> list[StepRule]:
    """Drop rules whose firing region lies inside another kept rule's."""
    kept: list[StepRule] = []
    for r in rules:
        if any(dominates(k, r) for k in kept):
            continue
        kept = [k for k in kept if not dominates(r, k)]
        kept.append(r)
    return kept


def path_to_rule(conds, rule_id: str, cap: int = RANK_CAP) -> StepRule | None:
    """Keep the per-feature upper bounds of a path; lower bounds are dropped."""
    upper: dict[int, int] = {}
    for f, is_upper, bound in conds:
        if is_upper:
            upper[f] = min(upper.get(f, bound), bound)
    if not upper:
        return None
    cur = upper.pop(0, cap)
    hist = tuple(sorted(upper.items()))
    return StepRule(rule_id, max(1, cur), tuple((o, max(1, t)) for o, t in hist))


def candidate_rules(model: MinedModel) -> list[tuple[float, StepRule]]:
    """Upper-bound rules from positive-predicting leaves, best path gain first."""
    found: dict = {}
    for ti, tree in enumerate(model.trees):
        for leaf, conds, g in tree.paths():
            if tree.pos_weight[leaf] <= tree.neg_weight[leaf]:
                continue
            rule = path_to_rule(conds, f"t{ti}n{leaf}", model.cap)
            if rule is None:
                continue
            key = _rule_key(rule)
            if key not in found or g > found[key][0]:
                found[key] = (g, rule)
    return sorted(found.values(), key=lambda gr: (-gr[0], _rule_key(gr[1])))


def distill_rules(model: MinedModel, max_rules: int = 4, windows: WindowSet | None = None) -> RuleSet:
    """Turn the ensemble into at most ``max_rules`` stepwise threshold rules.

    Without ``windows`` the top-gain non-dominated paths are kept. With
    ``windows``, rules are picked greedily from those candidates to maximise
    stop-detection F1 on the given traces. Rule ids are ``M1, M2, ...``.
    """
    if max_rules < 1:
        raise MinerError("max_rules must be >= 1")
    cands = [r for _, r in candidate_rules(model)]
    if not cands:
        log.warning("model has no positive-predicting leaf; distilled rule set is empty")
        return RuleSet(())
    if windows is None:
        chosen = prune_dominated(cands)[:max_rules]
    else:
        chosen = _greedy_select(cands, windows, max_rules, model.cap)
    rules = tuple(
        StepRule(f"M{i + 1}", r.current_threshold, r.history_thresholds) for i, r in enumerate(chosen)
    )
    return RuleSet(rules)


def _greedy_select(cands, windows, max_rules, cap):
    pool = prune_dominated(cands)
    chosen: list[StepRule] = []
    best = -1.0
    while len(chosen) < max_rules:
        pick, pick_f1 = None, best
        for r in pool:
            if r in chosen:
                continue
            trial = prune_dominated(chosen + [r])
            f1 = detection_metrics(rules_fire(RuleSet(tuple(_renamed(trial))), windows.X, cap), windows).f1
            if f1 > pick_f1 + 1e-12:
                pick, pick_f1 = r, f1
        if pick is None:
            break
        chosen = prune_dominated(chosen + [pick])
        best = pick_f1
    return chosen


def _renamed(rules):
    return [StepRule(f"_{i}", r.current_threshold, r.history_thresholds) for i, r in enumerate(rules)]


def rules_fire(rules: RuleSet, X, cap: int = RANK_CAP) -> np.ndarray:
    """Boolean per window: does any rule fire."""
    if not rules.rules:
        return np.zeros(len(X), dtype=bool)
    cur, hist = rules.threshold_arrays()
    return kernels.match_windows(np.asarray(X, dtype=np.int64), cur, hist, cap) >= 0


# -- metrics ----------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    degenerate: bool = False
    tolerant_recall: float | None = None


def prf(y_true, y_pred) -> Metrics:
    """Precision/recall/F1; undefined ratios are reported as 0 with a flag."""
    y_true = np.asarray(y_true, dtype=bool)
    y_pred = np.asarray(y_pred, dtype=bool)
    tp = int((y_true & y_pred).sum())
    fp = int((~y_true & y_pred).sum())
    fn = int((y_true & ~y_pred).sum())
    degenerate = False
    if tp + fp == 0:
        precision, degenerate = 0.0, True
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall, degenerate = 0.0, True
    else:
        recall = tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return Metrics(precision, recall, f1, degenerate)


def first_fire_mask(fired, windows: WindowSet) -> np.ndarray:
    """Keep only the earliest firing window per trace (what a stop detector sees)."""
    fired = np.asarray(fired, dtype=bool)
    out = np.zeros_like(fired)
    order = np.lexsort((windows.sentence_index, windows.trace_index))
    seen = set()
    for i in order[fired[order]]:
        t = int(windows.trace_index[i])
        if t not in seen:
            seen.add(t)
            out[i] = True
    return out


def detection_metrics(fired, windows: WindowSet) -> Metrics:
    """Window-level P/R/F1 when each trace stops at its first firing window."""
    return prf(windows.y, first_fire_mask(fired, windows))


def tolerant_recall(pred, windows: WindowSet, tolerance: int = 1, traces=None) -> float:
    """Share of RCPs with a positive prediction within ``tolerance`` sentences."""
    pred = np.asarray(pred, dtype=bool)
    if windows.rcp_index is None:
        raise MinerError("windows carry no rcp_index")
    if traces is None:
        traces = np.unique(windows.trace_index[windows.y])
    hits = 0
    for t in traces:
        rcp = windows.rcp_index[t]
        near = (windows.trace_index == t) & (np.abs(windows.sentence_index - rcp) <= tolerance)
        hits += bool(pred[near].any())
    return hits / len(traces) if len(traces) else 0.0


@dataclass(frozen=True)
class CVResult:
    folds: tuple[Metrics, ...]

    @property
    def mean_precision(self):
        return float(np.mean([m.precision for m in self.folds]))

    @property
    def mean_recall(self):
        return float(np.mean([m.recall for m in self.folds]))

    @property
    def mean_f1(self):
        return float(np.mean([m.f1 for m in self.folds]))

    @property
    def mean_tolerant_recall(self):
        return float(np.mean([m.tolerant_recall for m in self.folds]))


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    """Fold id per window ordinal: a seeded permutation dealt round-robin."""
    perm = np.random.default_rng(seed).permutation(n)
    out = np.empty(n, dtype=np.int64)
    out[perm] = np.arange(n) % folds
    return out


def cross_validate(windows: WindowSet, folds: int = 5, seed: int = 0, tolerance: int = 1, **train_kw) -> CVResult:
    """K-fold window classification metrics plus RCP recall within ``tolerance``.

    Tolerant recall asks, for each held-out positive, whether the fold's
    model flags any window of that trace within ``tolerance`` sentences of
    the RCP; those neighbouring windows are scored without their labels.
    """
    if folds < 2:
        raise MinerError("folds must be >= 2")
    n_pos = int(np.asarray(windows.y).sum())
    if n_pos < folds:
        raise MinerError(f"{n_pos} positive windows cannot fill {folds} folds")
    assign = fold_assignment(len(windows), folds, seed)
    results = []
    for k in range(folds):
        test = assign == k
        model = train(windows.subset(np.flatnonzero(~test)), seed=seed, **train_kw)
        pred_all = model.predict(windows.X)
        m = prf(windows.y[test], pred_all[test])
        held_pos = np.unique(windows.trace_index[test & windows.y])
        tr = tolerant_recall(pred_all, windows, tolerance, traces=held_pos) if held_pos.size else 0.0
        results.append(Metrics(m.precision, m.recall, m.f1, m.degenerate, tr))
    return CVResult(tuple(results))
