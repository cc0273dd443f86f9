"""Gradient-free tuning of a program's numeric literals.

A (1+1) evolution strategy: one parent, one Gaussian offspring per step,
per-coordinate scales from the starting point and a global step multiplier
adapted by the one-fifth success rule (x1.5 on success, x1.5^-1/4 on
failure, so the multiplier is stationary at a 1/5 success rate). Ties are
accepted as the new parent so the search drifts across the plateaus that
thresholded count features produce.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .cohort.schema import CohortTable
from .dsl import PhenotypeProgram, apply_params, evaluate, extract_params
from .exceptions import ConfigurationError, UndefinedMetricError
from .metrics import auprc

SUCCESS_FACTOR = 1.5
FAILURE_FACTOR = 1.5 ** -0.25


@dataclass(frozen=True)
class TuneConfig:
    budget: int = 1000
    seed: int = 0
    sigma_scale: float = 0.5
    sigma_floor: float = 0.1
    objective: str = "auprc"

    def __post_init__(self):
        if self.budget < 1:
            raise ConfigurationError("budget must be at least 1")
        if self.sigma_scale <= 0 or self.sigma_floor <= 0:
            raise ConfigurationError("sigma_scale and sigma_floor must be positive")
        if self.objective != "auprc":
            raise ConfigurationError("only the 'auprc' objective is supported")

    def initial_sigma(self, x0: np.ndarray) -> np.ndarray:
        return np.maximum(self.sigma_scale * np.abs(x0), self.sigma_floor)


@dataclass(frozen=True)
class TraceRow:
    evaluation: int
    candidate: Tuple[float, ...]
    score: float
    accepted: bool


@dataclass
class TuneResult:
    original_values: np.ndarray
    tuned_values: np.ndarray
    original_score: float
    tuned_score: float
    evaluations_used: int
    trace: List[TraceRow] = field(default_factory=list)
    note: Optional[str] = None

    @property
    def improvements(self) -> List[TraceRow]:
        best = -math.inf
        out = []
        for row in self.trace:
            if row.score > best:
                best = row.score
                out.append(row)
        return out

    def summary(self) -> dict:
        return {
            "original_values": self.original_values.tolist(),
            "tuned_values": self.tuned_values.tolist(),
            "original_score": self.original_score,
            "tuned_score": self.tuned_score,
            "evaluations_used": self.evaluations_used,
            "note": self.note,
        }


def _safe(objective, x) -> float:
    try:
        v = float(objective(x))
    except (ArithmeticError, ValueError, UndefinedMetricError):
        return -math.inf
    return v if math.isfinite(v) else -math.inf


def optimize(objective: Callable[[np.ndarray], float], x0, cfg: TuneConfig = None) -> TuneResult:
    """Maximise ``objective`` from ``x0``; never returns a point worse than x0.

    Exceptions and non-finite values from the objective score -inf.
    ``cfg.budget`` counts every objective call including the one at x0.
    """
    cfg = cfg or TuneConfig()
    x0 = np.asarray(x0, dtype=float).copy()
    rng = np.random.default_rng(cfg.seed)
    f0 = _safe(objective, x0)
    trace = [TraceRow(0, tuple(x0.tolist()), f0, True)]
    parent, f_parent = x0.copy(), f0
    best, f_best = x0.copy(), f0
    sigma = cfg.initial_sigma(x0)
    step = 1.0
    used = 1
    while used < cfg.budget and len(x0):
        child = parent + step * sigma * rng.standard_normal(len(x0))
        f_child = _safe(objective, child)
        used += 1
        accepted = f_child >= f_parent
        trace.append(TraceRow(used - 1, tuple(child.tolist()), f_child, bool(accepted)))
        if f_child > f_parent:
            step *= SUCCESS_FACTOR
        elif f_child < f_parent:
            step *= FAILURE_FACTOR
        if accepted:
            parent, f_parent = child, f_child
        if f_child > f_best:
            best, f_best = child.copy(), f_child
        step = min(max(step, 1e-12), 1e12)
    note = None if len(x0) else "no numeric literals to tune"
    return TuneResult(x0, best, f0, f_best, used, trace, note)


def tune_program(
    program: PhenotypeProgram, train: CohortTable, labels, cfg: TuneConfig = None
) -> Tuple[PhenotypeProgram, TuneResult]:
    """Tune the literals of ``program`` for training AUPRC.

    Candidate vectors that make the program fail at runtime score -inf. The
    returned program has the same structure and size as the input.
    """
    cfg = cfg or TuneConfig()
    y = np.asarray(labels, dtype=bool)
    slots = extract_params(program)
    x0 = slots.as_array()

    def objective(x):
        out = evaluate(apply_params(program, x), train)
        if not out.ok:
            return -math.inf
        return auprc(out.probabilities, y)

    if len(x0) == 0:
        score = _safe(objective, x0)
        res = TuneResult(x0, x0.copy(), score, score, 1, [TraceRow(0, (), score, True)],
                         "no numeric literals to tune")
        return program, res
    res = optimize(objective, x0, cfg)
    if res.tuned_score > res.original_score:
        return apply_params(program, res.tuned_values), res
    res.tuned_values = x0.copy()
    return program, res


def write_trace(result: TuneResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["evaluation", "candidate", "score", "accepted"])
        for row in result.trace:
            w.writerow([row.evaluation, " ".join(repr(v) for v in row.candidate), repr(row.score), int(row.accepted)])
