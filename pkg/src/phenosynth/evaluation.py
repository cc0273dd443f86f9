"""Evaluation protocol: folds, bootstrap intervals, subgroups, significance."""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .cohort.schema import RACES, SEXES, CohortTable
from .cohort.split import kfold_indices
from .exceptions import ConfigurationError, UndefinedMetricError
from .metrics import MetricsReport, _check, _midranks, auprc, auroc, compute_metrics, confusion_rates


@dataclass(frozen=True)
class EvalProtocol:
    folds: int = 5
    seeds: int = 10
    train_fraction: float = 0.75
    stratified: bool = True
    ci_level: float = 0.90
    bootstrap_resamples: int = 1000

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigurationError("folds must be at least 2")
        if self.seeds < 1:
            raise ConfigurationError("seeds must be at least 1")
        if not 0 < self.ci_level < 1:
            raise ConfigurationError("ci_level must be in (0, 1)")
        if not 0 < self.train_fraction < 1:
            raise ConfigurationError("train_fraction must be in (0, 1)")
        if self.bootstrap_resamples < 1:
            raise ConfigurationError("bootstrap_resamples must be positive")


def stratified_kfold(
    table: CohortTable, k: int = 5, seed: int = 0, phenotype: str = "aTRH", source: str = "heuristic"
) -> List[Tuple[CohortTable, CohortTable]]:
    """(train, validation) table pairs stratified on one label."""
    return [
        (table.take(tr), table.take(va))
        for tr, va in kfold_indices(table.label(phenotype, source), k, seed)
    ]


# -- bootstrap ---------------------------------------------------------------

def percentile_interval(stats: Sequence[float], level: float) -> Tuple[float, float]:
    """Percentile bounds using 1-based order statistics round(B*a/2) and
    round(B*(1-a/2)), e.g. the 50th and 950th of 1000 at level 0.90."""
    x = np.sort(np.asarray(stats, dtype=float))
    b = len(x)
    if b == 0:
        raise ValueError("no bootstrap statistics")
    alpha = 1.0 - level
    lo = min(max(int(round(b * alpha / 2)), 1), b)
    hi = min(max(int(round(b * (1 - alpha / 2))), 1), b)
    return float(x[lo - 1]), float(x[hi - 1])


def bootstrap_ci(
    scores,
    labels,
    metric: Callable = auprc,
    level: float = 0.90,
    resamples: int = 1000,
    seed: int = 0,
) -> Tuple[float, float, float]:
    """(lo, hi, point) for ``metric`` over seeded row resamples.

    Resamples on which the metric is undefined are redrawn so exactly
    ``resamples`` statistics enter the interval. The point estimate is the
    metric on the full sample.
    """
    s, y = _check(scores, labels)
    point = metric(s, y)
    rng = np.random.default_rng(seed)
    n = len(y)
    stats = np.empty(resamples)
    max_draws = 100 * resamples + 100
    draws = 0
    i = 0
    while i < resamples:
        draws += 1
        if draws > max_draws:
            raise UndefinedMetricError("too many degenerate bootstrap resamples")
        idx = rng.integers(0, n, n)
        try:
            stats[i] = metric(s[idx], y[idx])
        except UndefinedMetricError:
            continue
        i += 1
    lo, hi = percentile_interval(stats, level)
    return lo, hi, float(point)


@dataclass(frozen=True)
class HeldOutReport:
    metrics: MetricsReport
    auprc_ci: Tuple[float, float]
    auroc_ci: Tuple[float, float]
    level: float

    def to_dict(self):
        return {
            **self.metrics.to_dict(),
            "auprc_ci": list(self.auprc_ci),
            "auroc_ci": list(self.auroc_ci),
            "ci_level": self.level,
        }


def evaluate_with_ci(scores, labels, threshold=0.5, level=0.90, resamples=1000, seed=0) -> HeldOutReport:
    m = compute_metrics(scores, labels, threshold)
    p_lo, p_hi, _ = bootstrap_ci(scores, labels, auprc, level, resamples, seed)
    r_lo, r_hi, _ = bootstrap_ci(scores, labels, auroc, level, resamples, seed)
    return HeldOutReport(m, (p_lo, p_hi), (r_lo, r_hi), level)


# -- subgroups ---------------------------------------------------------------

@dataclass(frozen=True)
class SubgroupCell:
    race: str
    sex: str
    n: int
    n_positive: int
    prevalence: float
    auprc: Optional[float]
    auroc: Optional[float]
    fp_rate: float
    fn_rate: float
    undefined: bool
    low_n: bool


@dataclass(frozen=True)
class SubgroupReport:
    cells: Tuple[SubgroupCell, ...]

    @property
    def n(self) -> int:
        return sum(c.n for c in self.cells)

    def to_rows(self):
        return [asdict(c) for c in self.cells]


def subgroup_report(scores, labels, sex, race, threshold=0.5, min_positives=5, min_n=20) -> SubgroupReport:
    """Metrics per race x sex cell. Cells without both classes get ``None``
    metrics and ``undefined=True`` instead of raising."""
    s, y = _check(scores, labels)
    sex = np.asarray(sex, dtype=object)
    race = np.asarray(race, dtype=object)
    races = list(RACES) + sorted(set(race) - set(RACES))
    sexes = list(SEXES) + sorted(set(sex) - set(SEXES))
    cells = []
    for r in races:
        for g in sexes:
            m = (race == r) & (sex == g)
            n = int(m.sum())
            if n == 0:
                continue
            ys, ss = y[m], s[m]
            n_pos = int(ys.sum())
            try:
                p = auprc(ss, ys)
            except UndefinedMetricError:
                p = None
            try:
                a = auroc(ss, ys)
            except UndefinedMetricError:
                a = None
            fpr, fnr = confusion_rates(ss, ys, threshold)
            cells.append(SubgroupCell(
                r, g, n, n_pos, n_pos / n, p, a, fpr, fnr,
                undefined=p is None or a is None,
                low_n=n_pos < min_positives or n < min_n,
            ))
    return SubgroupReport(tuple(cells))


# -- significance ------------------------------------------------------------

def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def mann_whitney(x, y) -> float:
    """Two-sided Mann-Whitney-Wilcoxon p-value.

    Exact enumeration of group assignments when both groups have at most 8
    members, otherwise the normal approximation with tie and continuity
    corrections.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    n1, n2 = len(x), len(y)
    if n1 == 0 or n2 == 0:
        raise ValueError("both groups must be nonempty")
    pooled = np.concatenate([x, y])
    ranks = _midranks(pooled)
    u = ranks[:n1].sum() - n1 * (n1 + 1) / 2.0
    mu = n1 * n2 / 2.0
    if n1 <= 8 and n2 <= 8:
        obs = abs(u - mu)
        hits = total = 0
        base = n1 * (n1 + 1) / 2.0
        for combo in itertools.combinations(range(n1 + n2), n1):
            total += 1
            if abs(ranks[list(combo)].sum() - base - mu) >= obs - 1e-9:
                hits += 1
        return min(1.0, hits / total)
    n = n1 + n2
    _, counts = np.unique(pooled, return_counts=True)
    tie = float(np.sum(counts ** 3 - counts))
    var = n1 * n2 / 12.0 * ((n + 1) - tie / (n * (n - 1)))
    if var <= 0:
        return 1.0
    z = max(abs(u - mu) - 0.5, 0.0) / math.sqrt(var)
    return min(1.0, 2.0 * _norm_sf(z))


def holm_adjust(pvalues: Sequence[float]) -> List[float]:
    """Holm step-down adjusted p-values, returned in input order."""
    p = np.asarray(pvalues, dtype=float)
    m = len(p)
    order = np.argsort(p, kind="mergesort")
    adj = np.empty(m)
    running = 0.0
    for rank, i in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p[i]))
        adj[i] = running
    return adj.tolist()


TIERS = ((1e-4, "****"), (1e-3, "***"), (1e-2, "**"), (5e-2, "*"))


def significance_tier(p: float) -> str:
    for cut, mark in TIERS:
        if p <= cut:
            return mark
    return "ns"


def mwu_holm(pairs: Sequence[Tuple[Sequence[float], Sequence[float]]]) -> List[Tuple[float, str]]:
    """Holm-adjusted two-sided MWW p-values and tiers, one per (x, y) pair."""
    raw = [mann_whitney(a, b) for a, b in pairs]
    return [(p, significance_tier(p)) for p in holm_adjust(raw)]
