"""Vectorised evaluation of phenotype programs over a table.

Every value is a float64 column; comparisons and logical operators produce
1.0/0.0. Control flow is handled with row masks, so a statement inside an
``if`` only affects (and can only fail on) the rows whose guard is true.
The right operand of ``and``/``or`` is only checked on rows where it would
be reached under short-circuit evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from ..exceptions import SchemaError
from .nodes import Assign, Binary, Call, If, Let, Num, PhenotypeProgram, Pos, Ref, Unary


@dataclass(frozen=True)
class EvalFailure:
    phase: str  # "parse" or "runtime"
    message: str
    line: Optional[int] = None
    column: Optional[int] = None
    row_index: Optional[int] = None
    row_id: Optional[str] = None

    def __str__(self):
        return self.message


@dataclass(frozen=True)
class EvalOutcome:
    """Result of running a program: probabilities or a failure."""

    probabilities: Optional[np.ndarray] = None
    failure: Optional[EvalFailure] = None

    @property
    def ok(self) -> bool:
        return self.failure is None

    def __post_init__(self):
        if (self.probabilities is None) == (self.failure is None):
            raise ValueError("exactly one of probabilities/failure must be set")


class ProgramRuntimeError(Exception):
    def __init__(self, failure: EvalFailure):
        super().__init__(failure.message)
        self.failure = failure


_COMPARE = {
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
    "==": np.equal,
    "!=": np.not_equal,
}


class _Evaluator:
    def __init__(self, columns: Mapping[str, np.ndarray], n_rows: int, row_ids):
        self.columns = columns
        self.n = n_rows
        self.row_ids = row_ids

    def fail(self, what: str, pos: Pos, rows: np.ndarray):
        idx = int(np.flatnonzero(rows)[0])
        rid = None if self.row_ids is None else str(self.row_ids[idx])
        where = f" (row index {idx}" + (f", id {rid!r})" if rid is not None else ")")
        msg = f"RuntimeError at line {pos.line}, column {pos.column}: {what}{where}"
        raise ProgramRuntimeError(
            EvalFailure("runtime", msg, pos.line, pos.column, idx, rid)
        )

    def checked(self, value: np.ndarray, pos: Pos, mask: np.ndarray, what: str):
        bad = mask & ~np.isfinite(value)
        if bad.any():
            self.fail(what, pos, bad)
        return value

    # statements ------------------------------------------------------------
    def block(self, stmts, env, mask):
        env = dict(env)
        for stmt in stmts:
            if isinstance(stmt, Let):
                env[stmt.name] = self.expr(stmt.value, env, mask)
            elif isinstance(stmt, Assign):
                value = self.expr(stmt.value, env, mask)
                env[stmt.name] = np.where(mask, value, env[stmt.name])
            elif isinstance(stmt, If):
                guard = self.expr(stmt.guard, env, mask) != 0.0
                then_mask = mask & guard
                else_mask = mask & ~guard
                if then_mask.any():
                    self._merge(env, self.block(stmt.then, env, then_mask))
                if stmt.orelse and else_mask.any():
                    self._merge(env, self.block(stmt.orelse, env, else_mask))
            else:  # pragma: no cover - parser guarantees statement kinds
                raise TypeError(f"unknown statement {stmt!r}")
        return env

    @staticmethod
    def _merge(env, inner):
        # block-local lets are dropped; assignments to outer names are kept
        for name in env:
            env[name] = inner[name]

    # expressions -----------------------------------------------------------
    def expr(self, node, env, mask) -> np.ndarray:
        if isinstance(node, Num):
            return np.full(self.n, node.value)
        if isinstance(node, Ref):
            if node.name in env:
                return env[node.name]
            col = self.columns[node.name]
            return self.checked(col, node.pos, mask, f"feature '{node.name}' is missing")
        if isinstance(node, Unary):
            val = self.expr(node.operand, env, mask)
            if node.op == "-":
                return -val
            return (val == 0.0).astype(float)
        if isinstance(node, Binary):
            return self.binary(node, env, mask)
        if isinstance(node, Call):
            args = [self.expr(a, env, mask) for a in node.args]
            if node.func == "abs":
                return np.abs(args[0])
            if node.func == "min":
                return np.minimum.reduce(args)
            if node.func == "max":
                return np.maximum.reduce(args)
            x, lo, hi = args
            # clamp(x, lo, hi) = min(max(x, lo), hi)
            return np.minimum(np.maximum(x, lo), hi)
        raise TypeError(f"unknown expression {node!r}")  # pragma: no cover

    def binary(self, node: Binary, env, mask):
        op = node.op
        left = self.expr(node.left, env, mask)
        if op in ("and", "or"):
            ltrue = left != 0.0
            sub = mask & ltrue if op == "and" else mask & ~ltrue
            right = self.expr(node.right, env, sub) != 0.0
            out = (ltrue & right) if op == "and" else (ltrue | right)
            return out.astype(float)
        right = self.expr(node.right, env, mask)
        if op in _COMPARE:
            return _COMPARE[op](left, right).astype(float)
        with np.errstate(all="ignore"):
            if op == "+":
                out = left + right
            elif op == "-":
                out = left - right
            elif op == "*":
                out = left * right
            else:
                zero = mask & (right == 0.0)
                if zero.any():
                    self.fail("division by zero", node.pos, zero)
                out = left / right
        return self.checked(out, node.pos, mask, "arithmetic produced a non-finite value")


def evaluate_columns(
    program: PhenotypeProgram,
    columns: Mapping[str, np.ndarray],
    n_rows: int,
    row_ids: Optional[Sequence] = None,
) -> EvalOutcome:
    """Evaluate ``program`` on column arrays of length ``n_rows``."""
    from .analysis import features_used

    missing = sorted(features_used(program) - set(columns))
    if missing:
        raise SchemaError(f"table has no feature '{missing[0]}'", missing[0])
    cols = {name: np.asarray(columns[name], dtype=float) for name in features_used(program)}
    ev = _Evaluator(cols, n_rows, row_ids)
    mask = np.ones(n_rows, dtype=bool)
    try:
        env = ev.block(program.body, {}, mask)
        result = ev.expr(program.result.value, env, mask)
    except ProgramRuntimeError as err:
        return EvalOutcome(failure=err.failure)
    probs = np.clip(result, 0.0, 1.0)
    probs.setflags(write=False)
    return EvalOutcome(probabilities=probs)


def evaluate(program: PhenotypeProgram, table) -> EvalOutcome:
    """Evaluate ``program`` on every row of a cohort table.

    ``table`` is anything exposing ``column(name)``, ``n_rows`` and ``ids``
    (a :class:`~phenosynth.cohort.CohortTable` does).
    """
    from .analysis import features_used

    names = features_used(program)
    missing = sorted(n for n in names if n not in table.schema.names)
    if missing:
        raise SchemaError(f"table has no feature '{missing[0]}'", missing[0])
    columns = {n: table.column(n) for n in names}
    return evaluate_columns(program, columns, table.n_rows, table.ids)
