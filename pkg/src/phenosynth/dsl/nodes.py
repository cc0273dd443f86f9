"""Syntax tree for phenotype programs.

Nodes are frozen dataclasses. Source positions and cached depths are
excluded from equality so that two trees compare equal when they have the
same structure and literal values, regardless of formatting.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple, Union

BUILTINS = {
    # name: (min_args, max_args)
    "min": (2, None),
    "max": (2, None),
    "clamp": (3, 3),
    "abs": (1, 1),
}

BINARY_OPS = ("or", "and", "<", "<=", ">", ">=", "==", "!=", "+", "-", "*", "/")
UNARY_OPS = ("-", "not")

MAX_DEPTH = 64
# keeps worst-case parse time bounded; generated programs are far smaller
MAX_TOKENS = 5_000


@dataclass(frozen=True)
class Pos:
    line: int
    column: int

    def __str__(self):
        return f"line {self.line}, column {self.column}"


_NOPOS = Pos(0, 0)


def _pos():
    return field(default=_NOPOS, compare=False, repr=False)


def _depth():
    return field(default=1, compare=False, repr=False)


@dataclass(frozen=True)
class Num:
    value: float
    pos: Pos = _pos()
    depth: int = _depth()


@dataclass(frozen=True)
class Ref:
    name: str
    pos: Pos = _pos()
    depth: int = _depth()


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"
    pos: Pos = _pos()
    depth: int = _depth()


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    pos: Pos = _pos()
    depth: int = _depth()


@dataclass(frozen=True)
class Call:
    func: str
    args: Tuple["Expr", ...]
    pos: Pos = _pos()
    depth: int = _depth()


Expr = Union[Num, Ref, Unary, Binary, Call]


@dataclass(frozen=True)
class Let:
    name: str
    value: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Assign:
    name: str
    value: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class If:
    guard: Expr
    then: Tuple["Stmt", ...]
    orelse: Tuple["Stmt", ...] = ()
    pos: Pos = _pos()


Stmt = Union[Let, Assign, If]


@dataclass(frozen=True)
class Return:
    value: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class PhenotypeProgram:
    """A parsed phenotype program.

    ``body`` holds the statements before the final ``return``; ``result`` is
    the returned expression.
    """

    name: str
    body: Tuple[Stmt, ...]
    result: Return
    source_text: str = field(default="", compare=False, repr=False)

    def __str__(self):
        from .analysis import render

        return render(self)
