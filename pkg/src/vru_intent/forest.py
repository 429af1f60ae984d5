"""Random forest built on the tree kernels.

Bagged CART trees with Gini splits, per-node feature subsampling
(default floor(sqrt(d))) and majority-fraction leaves.  All randomness
comes from the counter-based stream in rng.py, so a (data, params) pair
maps to exactly one forest regardless of kernel backend.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import kernels, rng
from .errors import ContractError, DegenerateError


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 400
    max_depth: int = 15
    mtry: Optional[int] = None  # None -> floor(sqrt(d)), clamped to [1, d]
    min_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ContractError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ContractError("max_depth must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ContractError("mtry must be >= 1 when given")
        if self.min_leaf < 1:
            raise ContractError("min_leaf must be >= 1")

    def resolved_mtry(self, d: int) -> int:
        if self.mtry is None:
            return min(max(int(np.sqrt(d)), 1), d)
        return min(self.mtry, d)


@dataclass
class Tree:
    """Flat node arrays in depth-first preorder; feature == -1 marks leaves."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_classes) class fractions

    @property
    def n_nodes(self) -> int:
        return self.feature.size


@dataclass
class DecisionForest:
    trees: list[Tree]
    classes: list
    n_features: int
    params: ForestParams
    importances: np.ndarray

    @property
    def n_classes(self) -> int:
        return len(self.classes)


def _encode_labels(y) -> tuple[np.ndarray, list]:
    y = list(y)
    classes = sorted(set(y))
    index = {c: k for k, c in enumerate(classes)}
    return np.array([index[v] for v in y], dtype=np.int32), classes


def train_forest(X, y, params: ForestParams = ForestParams()) -> DecisionForest:
    """Fit a forest; tree t consumes the stream seeded by draw(seed, t)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ContractError("X must be 2-D")
    n, d = X.shape
    y_idx, classes = _encode_labels(y)
    if y_idx.size != n:
        raise ContractError(f"X has {n} rows but y has {y_idx.size} labels")
    if n < 2:
        raise ContractError("need at least 2 training samples")
    if not np.isfinite(X).all():
        raise ContractError("training features must be finite")
    if len(classes) < 2:
        raise DegenerateError("training labels contain a single class")
    mtry = params.resolved_mtry(d)

    trees = []
    total_decrease = np.zeros(d, dtype=np.float64)
    for t in range(params.n_trees):
        seed_t = rng.tree_stream_seed(params.seed, t)
        fa, th, le, ri, va, dec = kernels.build_tree(
            X, y_idx, len(classes), params.max_depth, mtry, params.min_leaf, seed_t
        )
        trees.append(Tree(fa, th, le, ri, va))
        total_decrease += dec

    imp = total_decrease / float(params.n_trees)
    s = imp.sum()
    if s > 0.0:
        imp = imp / s
    return DecisionForest(
        trees=trees, classes=classes, n_features=d, params=params, importances=imp
    )


def predict_proba(forest: DecisionForest, X) -> np.ndarray:
    """Mean leaf class fractions over trees; (m, n_classes), rows sum to 1."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != forest.n_features:
        raise ContractError(
            f"model expects {forest.n_features} features, got {X.shape[1]}"
        )
    acc = np.zeros((X.shape[0], forest.n_classes), dtype=np.float64)
    for tree in forest.trees:
        acc += kernels.tree_leaf_values(
            X, tree.feature, tree.threshold, tree.left, tree.right, tree.value
        )
    acc /= float(len(forest.trees))
    return acc[0] if single else acc


def classify(
    forest: DecisionForest,
    X,
    threshold: float = 0.5,
    positive=None,
) -> list:
    """Labels from probabilities.

    Binary with a designated positive class: predict it iff its
    probability >= threshold.  Otherwise argmax with lowest class index
    winning ties.
    """
    proba = predict_proba(forest, X)
    single = proba.ndim == 1
    if single:
        proba = proba[None, :]
    if positive is not None:
        if forest.n_classes != 2:
            raise ContractError("positive-class thresholding needs exactly 2 classes")
        if positive not in forest.classes:
            raise ContractError(f"unknown positive class {positive!r}")
        p = forest.classes.index(positive)
        other = forest.classes[1 - p]
        out = [positive if row[p] >= threshold else other for row in proba]
    else:
        out = [forest.classes[int(np.argmax(row))] for row in proba]
    return out[0] if single else out


@dataclass
class GridCell:
    n_trees: int
    max_depth: int
    scores: list[float]

    @property
    def mean_score(self) -> float:
        return float(np.mean(self.scores))


@dataclass
class GridSearchResult:
    forest: DecisionForest
    best: ForestParams
    table: list[GridCell]

    def cell(self, n_trees: int, max_depth: int) -> GridCell:
        for c in self.table:
            if c.n_trees == n_trees and c.max_depth == max_depth:
                return c
        raise KeyError((n_trees, max_depth))


PEDESTRIAN_TREE_GRID = (100, 200, 300, 400, 500)
PEDESTRIAN_DEPTH_GRID = (7, 15, 21, 30)
CYCLIST_TREE_GRID = (50, 100, 200, 300, 400, 500)
CYCLIST_DEPTH_GRID = (7, 10, 13, 16, 19, 22, 25, 28, 31, 34)


def stratified_folds(y_idx: np.ndarray, n_folds: int, seed: int) -> np.ndarray:
    """Deterministic stratified fold assignment, one int per sample."""
    if n_folds < 2:
        raise ContractError("need at least 2 folds")
    fold = np.empty(y_idx.size, dtype=np.int64)
    for k in np.unique(y_idx):
        idx = np.where(y_idx == k)[0]
        if idx.size < n_folds:
            raise ContractError(
                f"class {int(k)} has {idx.size} samples, fewer than {n_folds} folds"
            )
        g = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, int(k)])))
        g.shuffle(idx)
        fold[idx] = np.arange(idx.size) % n_folds
    return fold


def _accuracy(pred: Sequence, truth: Sequence) -> float:
    hits = sum(1 for p, t in zip(pred, truth) if p == t)
    return hits / len(truth)


def grid_search_cv(
    X,
    y,
    tree_grid: Sequence[int] = PEDESTRIAN_TREE_GRID,
    depth_grid: Sequence[int] = PEDESTRIAN_DEPTH_GRID,
    n_folds: int = 5,
    base: ForestParams = ForestParams(),
) -> GridSearchResult:
    """Stratified k-fold grid search, then refit the winner on all data.

    Ties on mean validation accuracy break toward fewer trees, then
    smaller depth.  The same fold split serves every grid cell.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = list(y)
    y_idx, _ = _encode_labels(y)
    fold = stratified_folds(y_idx, n_folds, base.seed)
    y_arr = np.array(y, dtype=object)

    table = []
    for n_trees, depth in itertools.product(tree_grid, depth_grid):
        params = replace(base, n_trees=n_trees, max_depth=depth)
        scores = []
        for f in range(n_folds):
            tr = fold != f
            va = ~tr
            model = train_forest(X[tr], y_arr[tr], params)
            scores.append(_accuracy(classify(model, X[va]), y_arr[va]))
        table.append(GridCell(n_trees=n_trees, max_depth=depth, scores=scores))

    best_cell = min(table, key=lambda c: (-c.mean_score, c.n_trees, c.max_depth))
    best = replace(base, n_trees=best_cell.n_trees, max_depth=best_cell.max_depth)
    return GridSearchResult(forest=train_forest(X, y, best), best=best, table=table)


def grid_search_holdout(
    X_train,
    y_train,
    X_val,
    y_val,
    tree_grid: Sequence[int] = CYCLIST_TREE_GRID,
    depth_grid: Sequence[int] = CYCLIST_DEPTH_GRID,
    base: ForestParams = ForestParams(),
) -> GridSearchResult:
    """Grid search scored on a fixed validation set; refit on train only."""
    table = []
    for n_trees, depth in itertools.product(tree_grid, depth_grid):
        params = replace(base, n_trees=n_trees, max_depth=depth)
        model = train_forest(X_train, y_train, params)
        score = _accuracy(classify(model, X_val), list(y_val))
        table.append(GridCell(n_trees=n_trees, max_depth=depth, scores=[score]))
    best_cell = min(table, key=lambda c: (-c.mean_score, c.n_trees, c.max_depth))
    best = replace(base, n_trees=best_cell.n_trees, max_depth=best_cell.max_depth)
    return GridSearchResult(
        forest=train_forest(X_train, y_train, best), best=best, table=table
    )


def importance_report(
    forest: DecisionForest, names: Sequence[str], top_n: Optional[int] = None
) -> list[tuple[str, float]]:
    """(name, weight) sorted by weight descending, index ascending on ties."""
    if len(names) != forest.n_features:
        raise ContractError(
            f"{forest.n_features} features but {len(names)} names supplied"
        )
    order = np.argsort(-forest.importances, kind="stable")
    if top_n is not None:
        order = order[:top_n]
    return [(names[i], float(forest.importances[i])) for i in order]
