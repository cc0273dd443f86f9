"""Static analyses and rewrites: size, feature use, literals, rendering."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import FrozenSet, Iterator, List, Sequence, Tuple

import numpy as np

from .nodes import (
    Assign,
    Binary,
    Call,
    If,
    Let,
    Num,
    PhenotypeProgram,
    Ref,
    Return,
    Unary,
)


def _children(node):
    if isinstance(node, (Num, Ref)):
        return ()
    if isinstance(node, Unary):
        return (node.operand,)
    if isinstance(node, Binary):
        return (node.left, node.right)
    if isinstance(node, Call):
        return node.args
    if isinstance(node, (Let, Assign, Return)):
        return (node.value,)
    if isinstance(node, If):
        return (node.guard,) + node.then + node.orelse
    if isinstance(node, PhenotypeProgram):
        return node.body + (node.result,)
    raise TypeError(f"not a program node: {node!r}")


def walk(node) -> Iterator:
    """Depth-first, left-to-right pre-order traversal (source order)."""
    stack = [node]
    while stack:
        cur = stack.pop()
        yield cur
        stack.extend(reversed(_children(cur)))


_EXPR = (Num, Ref, Unary, Binary, Call)
_STMT = (Let, Assign, If, Return)


def size(program: PhenotypeProgram) -> int:
    """Node count: statements plus expression nodes.

    The program root and blocks are not counted.
    """
    return sum(1 for n in walk(program) if isinstance(n, _EXPR + _STMT))


def features_used(program: PhenotypeProgram) -> FrozenSet[str]:
    bound = {n.name for n in walk(program) if isinstance(n, Let)}
    return frozenset(
        n.name for n in walk(program) if isinstance(n, Ref) and n.name not in bound
    )


def literal_count(program: PhenotypeProgram) -> int:
    return sum(1 for n in walk(program) if isinstance(n, Num))


@dataclass(frozen=True)
class ProgramStats:
    size: int
    features_used: FrozenSet[str]
    literal_count: int


def stats(program: PhenotypeProgram) -> ProgramStats:
    return ProgramStats(size(program), features_used(program), literal_count(program))


# --------------------------------------------------------------------------
# tunable literals


@dataclass(frozen=True)
class ParamSlots:
    """Numeric literals of a program in source order.

    ``paths`` address each literal as a tuple of (field, index) steps from
    the program root.
    """

    paths: Tuple[tuple, ...]
    values: Tuple[float, ...]

    def __len__(self):
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)


def _walk_paths(node, path=()):
    if isinstance(node, Num):
        yield path, node
        return
    for name, child in _named_children(node):
        yield from _walk_paths(child, path + (name,))


def _named_children(node):
    if isinstance(node, PhenotypeProgram):
        for i, s in enumerate(node.body):
            yield ("body", i), s
        yield ("result",), node.result
    elif isinstance(node, (Let, Assign, Return)):
        yield ("value",), node.value
    elif isinstance(node, If):
        yield ("guard",), node.guard
        for i, s in enumerate(node.then):
            yield ("then", i), s
        for i, s in enumerate(node.orelse):
            yield ("orelse", i), s
    elif isinstance(node, Unary):
        yield ("operand",), node.operand
    elif isinstance(node, Binary):
        yield ("left",), node.left
        yield ("right",), node.right
    elif isinstance(node, Call):
        for i, a in enumerate(node.args):
            yield ("args", i), a


def extract_params(program: PhenotypeProgram) -> ParamSlots:
    found = list(_walk_paths(program))
    return ParamSlots(tuple(p for p, _ in found), tuple(n.value for _, n in found))


def apply_params(program: PhenotypeProgram, values: Sequence[float]) -> PhenotypeProgram:
    """Return a copy of ``program`` with its literals replaced positionally."""
    values = [float(v) for v in np.asarray(values, dtype=float).ravel()]
    count = literal_count(program)
    if len(values) != count:
        raise ValueError(f"program has {count} literals, got {len(values)} values")
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"literal values must be finite, got {v}")
    it = iter(values)

    def rebuild(node):
        if isinstance(node, Num):
            return dataclasses.replace(node, value=next(it))
        if isinstance(node, (Ref,)):
            return node
        if isinstance(node, PhenotypeProgram):
            return dataclasses.replace(
                node,
                body=tuple(rebuild(s) for s in node.body),
                result=rebuild(node.result),
                source_text="",
            )
        if isinstance(node, (Let, Assign, Return)):
            return dataclasses.replace(node, value=rebuild(node.value))
        if isinstance(node, If):
            return dataclasses.replace(
                node,
                guard=rebuild(node.guard),
                then=tuple(rebuild(s) for s in node.then),
                orelse=tuple(rebuild(s) for s in node.orelse),
            )
        if isinstance(node, Unary):
            return dataclasses.replace(node, operand=rebuild(node.operand))
        if isinstance(node, Binary):
            return dataclasses.replace(node, left=rebuild(node.left), right=rebuild(node.right))
        if isinstance(node, Call):
            return dataclasses.replace(node, args=tuple(rebuild(a) for a in node.args))
        raise TypeError(node)

    return rebuild(program)


# --------------------------------------------------------------------------
# rendering

_PREC = {"or": 1, "and": 2, "not": 3, "<": 4, "<=": 4, ">": 4, ">=": 4, "==": 4, "!=": 4,
         "+": 5, "-": 5, "*": 6, "/": 6}
_UNARY_MINUS = 7
_ATOM = 8
INDENT = "  "


def format_number(value: float) -> str:
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def _prec(node) -> int:
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Unary):
        return _PREC["not"] if node.op == "not" else _UNARY_MINUS
    return _ATOM


def render_expr(node) -> str:
    if isinstance(node, Num):
        return format_number(node.value)
    if isinstance(node, Ref):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}(" + ", ".join(render_expr(a) for a in node.args) + ")"
    if isinstance(node, Unary):
        inner = render_expr(node.operand)
        if node.op == "not":
            if _prec(node.operand) < _PREC["not"]:
                inner = f"({inner})"
            return f"not {inner}"
        if _prec(node.operand) < _UNARY_MINUS or (
            isinstance(node.operand, Num) and node.operand.value < 0
        ):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Binary):
        p = _PREC[node.op]
        left, right = render_expr(node.left), render_expr(node.right)
        # comparisons do not chain, so both sides need parentheses at equal precedence
        if _prec(node.left) < p or (p == 4 and _prec(node.left) == 4):
            left = f"({left})"
        if _prec(node.right) <= p:
            right = f"({right})"
        return f"{left} {node.op} {right}"
    raise TypeError(node)


def _render_stmts(stmts, level, out: List[str]):
    pad = INDENT * level
    for s in stmts:
        if isinstance(s, Let):
            out.append(f"{pad}let {s.name} = {render_expr(s.value)};")
        elif isinstance(s, Assign):
            out.append(f"{pad}{s.name} = {render_expr(s.value)};")
        elif isinstance(s, If):
            out.append(f"{pad}if ({render_expr(s.guard)}) {{")
            _render_stmts(s.then, level + 1, out)
            if s.orelse:
                out.append(f"{pad}}} else {{")
                _render_stmts(s.orelse, level + 1, out)
            out.append(f"{pad}}}")


def render(program: PhenotypeProgram) -> str:
    """Canonical source text; ``parse(render(p)) == p``."""
    out = [f"phenotype {program.name} {{"]
    _render_stmts(program.body, 1, out)
    out.append(f"{INDENT}return {render_expr(program.result.value)};")
    out.append("}")
    return "\n".join(out) + "\n"
