"""Stratified splitting and grid-search cross-validation for the risk forest."""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone

from .exceptions import ClassTooSmall, ConfigInvalid
from .metrics import confusion_matrix, macro_f1

DEFAULT_GRID = (
    {"max_depth": None, "min_samples_leaf": 1},
    {"max_depth": None, "min_samples_leaf": 5},
    {"max_depth": 12, "min_samples_leaf": 1},
    {"max_depth": 12, "min_samples_leaf": 5},
)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigInvalid(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


def stratified_split(labels, spec=SplitSpec()):
    """Per-class shuffled 70/30 (by default) split.

    Each class contributes round(fraction * size) rows to train (half rounds
    up), clamped so both sides keep at least one member. Returns sorted index
    arrays (train, test).
    """
    if not isinstance(spec, SplitSpec):
        spec = SplitSpec(**spec)
    y = np.asarray(labels).ravel()
    rng = np.random.default_rng(spec.seed)
    if not spec.stratified:
        perm = rng.permutation(len(y))
        k = int(np.floor(spec.train_fraction * len(y) + 0.5))
        return np.sort(perm[:k]), np.sort(perm[k:])
    train, test = [], []
    for c in np.unique(y):
        members = np.flatnonzero(y == c)
        if len(members) < 2:
            raise ClassTooSmall(f"class {c} has {len(members)} member(s); need at least 2 to split")
        members = rng.permutation(members)
        k = int(np.floor(spec.train_fraction * len(members) + 0.5))
        k = min(max(k, 1), len(members) - 1)
        train.append(members[:k])
        test.append(members[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_kfold(labels, k=5, seed=0):
    """Yield (train, test) index pairs; each class is dealt round-robin into folds."""
    if k < 2:
        raise ConfigInvalid(f"need k >= 2 folds, got {k}")
    y = np.asarray(labels).ravel()
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(y), dtype=np.int64)
    for c in np.unique(y):
        members = np.flatnonzero(y == c)
        if len(members) < k:
            raise ClassTooSmall(f"class {c} has {len(members)} member(s); need at least {k} for {k} folds")
        fold_of[rng.permutation(members)] = np.arange(len(members)) % k
    for fold in range(k):
        yield np.flatnonzero(fold_of != fold), np.flatnonzero(fold_of == fold)


def _tie_key(params):
    depth = params.get("max_depth")
    return (np.inf if depth is None else depth, -params.get("min_samples_leaf", 1))


@dataclass
class CVResult:
    best_params: dict
    best_score: float
    grid: list
    mean_scores: list
    fold_scores: list = field(default_factory=list)

    def to_dict(self):
        return {
            "best_params": self.best_params,
            "best_score": self.best_score,
            "cells": [
                {"params": p, "mean_macro_f1": m, "fold_macro_f1": f}
                for p, m, f in zip(self.grid, self.mean_scores, self.fold_scores)
            ],
        }


def cross_validate(estimator, X, y, grid=DEFAULT_GRID, k=5, seed=0):
    """Pick the grid point with the best mean macro-F1 over stratified folds.

    Ties go to the smaller max_depth (None counts as unlimited), then the
    larger min_samples_leaf, then the earlier grid entry.
    """
    grid = [dict(p) for p in grid]
    if not grid:
        raise ConfigInvalid("empty hyperparameter grid")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    folds = list(stratified_kfold(y, k, seed))
    fold_scores = []
    for params in grid:
        scores = []
        for train, test in folds:
            model = clone(estimator).set_params(**params).fit(X[train], y[train])
            scores.append(macro_f1(confusion_matrix(y[test], model.predict(X[test]))))
        fold_scores.append(scores)
    means = [float(np.mean(s)) for s in fold_scores]
    best = max(range(len(grid)), key=lambda i: (means[i], tuple(-v for v in _tie_key(grid[i])), -i))
    return CVResult(grid[best], means[best], grid, means, fold_scores)
