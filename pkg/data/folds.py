"""Stratified k-fold splitting (folds named Cross0..Cross{k-1})."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.model_selection import StratifiedKFold

from core.errors import ShapeError


def fold_name(i: int) -> str:
    return f"Cross{i}"


def fold_names(k: int) -> list[str]:
    return [fold_name(i) for i in range(k)]


def _round_robin(y: np.ndarray, k: int, seed: int) -> list[list[int]]:
    """Deal each shuffled class across the folds, continuing where the last class stopped."""
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for label in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == label))
        for j, i in enumerate(members):
            folds[(offset + j) % k].append(int(i))
        offset += len(members)
    return [sorted(f) for f in folds]


def kfold(ids: Sequence[str], labels: Sequence[int], k: int = 5, seed: int = 0) -> list[list[str]]:
    """
    k disjoint folds covering ids, stratified by label: per-class fold sizes
    differ by at most one.

    Classes smaller than k cannot fill every fold; those splits are dealt
    round-robin instead of going through StratifiedKFold.
    """
    assert k >= 2, f"k must be >= 2, got {k}"
    if len(ids) != len(labels):
        raise ShapeError(f"{len(ids)} ids but {len(labels)} labels")
    if k > len(ids):
        raise ValueError(f"cannot split {len(ids)} ids into {k} folds")
    y = np.asarray(labels)
    if np.unique(y, return_counts=True)[1].min() < k:
        return [[ids[i] for i in fold] for fold in _round_robin(y, k, seed)]
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    placeholder = np.zeros(len(ids))
    return [[ids[i] for i in sorted(test)] for _, test in splitter.split(placeholder, y)]


def train_test_for_fold(folds: list[list[str]], fold: int) -> tuple[list[str], list[str]]:
    """Training ids (all other folds) and test ids for one fold."""
    test = folds[fold]
    train = [i for j, f in enumerate(folds) if j != fold for i in f]
    return train, test
