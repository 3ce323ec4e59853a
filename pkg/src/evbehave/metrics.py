"""Fold splitting and scoring: accuracy, MAPE, adjusted Rand index."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Hashable, Sequence

import numpy as np

from .errors import AllSlotsExcluded, LengthMismatch, TooFewUsers

MAPE_FLOOR_KW = 1e-6


@dataclass(frozen=True)
class FoldSplit:
    K: int
    folds: tuple[tuple, ...]

    def train_test(self, i: int) -> tuple[list, list]:
        test = list(self.folds[i])
        train = [u for j, f in enumerate(self.folds) if j != i for u in f]
        return train, test


def kfold_split(user_ids: Sequence[Hashable], K: int, seed: int = 0) -> FoldSplit:
    """Shuffled partition into K folds whose sizes differ by at most one."""
    users = list(user_ids)
    if K < 1:
        raise ValueError("K must be >= 1")
    if len(users) < K:
        raise TooFewUsers(f"{len(users)} users < K={K}")
    order = np.random.default_rng(seed).permutation(len(users))
    folds = tuple(tuple(users[i] for i in chunk) for chunk in np.array_split(order, K))
    return FoldSplit(K, folds)


def accuracy(predicted, true) -> float:
    predicted, true = np.asarray(predicted), np.asarray(true)
    if predicted.shape != true.shape:
        raise LengthMismatch(f"{predicted.shape} vs {true.shape}")
    if predicted.size == 0:
        raise LengthMismatch("empty label vectors")
    return float(np.mean(predicted == true))


def mape(actual, predicted, floor: float = MAPE_FLOOR_KW) -> float:
    """Mean |a - p| / |a| over slots with |a| >= floor (fraction, not percent)."""
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if actual.shape != predicted.shape:
        raise LengthMismatch(f"{actual.shape} vs {predicted.shape}")
    keep = np.abs(actual) >= floor
    if not keep.any():
        raise AllSlotsExcluded("every actual value is below the exclusion floor")
    return float(np.mean(np.abs(actual[keep] - predicted[keep]) / np.abs(actual[keep])))


def adjusted_rand_index(labels_a, labels_b) -> float:
    a, b = list(labels_a), list(labels_b)
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)}")
    if len(a) < 2:
        raise LengthMismatch("need at least 2 labels")
    _, ia = np.unique(np.asarray(a, dtype=object).astype(str), return_inverse=True)
    _, ib = np.unique(np.asarray(b, dtype=object).astype(str), return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)

    pairs = lambda counts: sum(comb(int(c), 2) for c in counts)  # noqa: E731
    index = pairs(table.ravel())
    sum_a, sum_b = pairs(table.sum(axis=1)), pairs(table.sum(axis=0))
    expected = sum_a * sum_b / comb(len(a), 2)
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial (all-singletons or one block)
        return 1.0 if index == max_index else 0.0
    return float((index - expected) / (max_index - expected))
