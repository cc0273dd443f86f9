"""Ranking and threshold metrics for binary phenotype predictions."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np

from .exceptions import UndefinedMetricError


def _check(scores, labels) -> Tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"scores and labels differ in length ({s.size} vs {y.size})")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    if y.dtype != bool:
        if not np.all(np.isin(y, (0, 1))):
            raise ValueError("labels must be binary (0/1 or bool)")
        y = y.astype(bool)
    return s, y


def auprc(scores, labels) -> float:
    """Average precision: sum over distinct score thresholds (descending) of
    the recall increment times the precision at that threshold. Tied scores
    enter together."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUPRC is undefined without positive labels")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # last index of each block of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    seen = ends + 1
    precision = tp / seen
    recall_step = np.diff(np.r_[0, tp]) / n_pos
    return float(np.sum(recall_step * precision))


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    for a, b in zip(starts, ends):
        ranks[order[a:b]] = (a + b + 1) / 2.0
    return ranks


def auroc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative, ties
    counting one half (computed from midranks)."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs at least one positive and one negative label")
    u = _midranks(s)[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def confusion_rates(scores, labels, threshold: float = 0.5) -> Tuple[float, float]:
    """(FP / negatives, FN / positives) with positive meaning score >= threshold.
    An empty class contributes a rate of 0."""
    s, y = _check(scores, labels)
    pred = s >= threshold
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    return (fp / n_neg if n_neg else 0.0, fn / n_pos if n_pos else 0.0)


@dataclass(frozen=True)
class MetricsReport:
    auprc: float
    auroc: float
    fp_rate: float
    fn_rate: float
    n: int
    n_positive: int

    def to_dict(self):
        return asdict(self)


def compute_metrics(scores, labels, threshold: float = 0.5) -> MetricsReport:
    s, y = _check(scores, labels)
    fp_rate, fn_rate = confusion_rates(s, y, threshold)
    return MetricsReport(auprc(s, y), auroc(s, y), fp_rate, fn_rate, len(y), int(y.sum()))
