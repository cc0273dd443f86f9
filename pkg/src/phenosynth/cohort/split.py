"""Stratified hold-out splits and k-fold partitions."""
from __future__ import annotations

from typing import List, Tuple

import numpy as np

from ..exceptions import ConfigurationError, StratificationError
from .schema import CohortTable


def holdout_indices(labels, fraction: float = 0.75, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Stratified train/test index split.

    The train partition gets ``round(fraction * n)`` rows; positives are
    allocated proportionally (rounded) and negatives fill the remainder.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigurationError(f"fraction must be in (0, 1), got {fraction}")
    y = np.asarray(labels, dtype=bool)
    n = len(y)
    n_train = int(round(fraction * n))
    if n_train in (0, n):
        raise StratificationError(f"cannot split {n} rows with fraction {fraction}")
    rng = np.random.default_rng(seed)
    pos = np.flatnonzero(y)
    neg = np.flatnonzero(~y)
    if len(pos) == 0 or len(neg) == 0:
        order = rng.permutation(n)
        return np.sort(order[:n_train]), np.sort(order[n_train:])
    if len(pos) < 2 or len(neg) < 2:
        raise StratificationError(
            f"too few members to stratify ({len(pos)} positives, {len(neg)} negatives)"
        )
    pos_train = int(round(fraction * len(pos)))
    pos_train = min(max(pos_train, 1), len(pos) - 1)
    neg_train = n_train - pos_train
    if not 0 < neg_train < len(neg):
        raise StratificationError("split sizes leave a stratum empty")
    pos = rng.permutation(pos)
    neg = rng.permutation(neg)
    train = np.concatenate([pos[:pos_train], neg[:neg_train]])
    test = np.concatenate([pos[pos_train:], neg[neg_train:]])
    return np.sort(train), np.sort(test)


def split_holdout(
    table: CohortTable,
    fraction: float = 0.75,
    seed: int = 0,
    phenotype: str = "aTRH",
    source: str = "heuristic",
) -> Tuple[CohortTable, CohortTable]:
    """Split ``table`` into train/test, stratified on one label."""
    train, test = holdout_indices(table.label(phenotype, source), fraction, seed)
    return table.take(train), table.take(test)


def kfold_indices(labels, k: int = 5, seed: int = 0) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Stratified k-fold (train, validation) index pairs.

    Shuffled positives are dealt to folds round-robin and negatives continue
    the same cycle, so each fold's class counts are within one of
    proportional and fold sizes differ by at most one.
    """
    y = np.asarray(labels, dtype=bool)
    n = len(y)
    if k < 2:
        raise ConfigurationError(f"k must be at least 2, got {k}")
    if k > n:
        raise ConfigurationError(f"cannot make {k} folds from {n} rows")
    rng = np.random.default_rng(seed)
    order = np.concatenate([rng.permutation(np.flatnonzero(y)), rng.permutation(np.flatnonzero(~y))])
    fold_of = np.empty(n, dtype=int)
    fold_of[order] = np.arange(n) % k
    everything = np.arange(n)
    return [(everything[fold_of != f], everything[fold_of == f]) for f in range(k)]
