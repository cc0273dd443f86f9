"""Recursive-descent parser for phenotype programs."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Collection, Iterable, Iterator, List, Sequence

from .nodes import (
    BUILTINS,
    MAX_DEPTH,
    MAX_TOKENS,
    Assign,
    Binary,
    Call,
    If,
    Let,
    Num,
    PhenotypeProgram,
    Pos,
    Ref,
    Return,
    Unary,
)

KEYWORDS = frozenset({"phenotype", "let", "if", "else", "return", "and", "or", "not"})
RESERVED = KEYWORDS | frozenset(BUILTINS)
COMPARISONS = ("<", "<=", ">", ">=", "==", "!=")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<number>[0-9]+(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?)
  | (?P<ident>[A-Za-z][A-Za-z0-9_]*)
  | (?P<op><=|>=|==|!=|[<>+\-*/=(){};,])
    """,
    re.VERBOSE,
)


class ParseError(ValueError):
    """A program could not be parsed or resolved.

    ``str(err)`` is the text embedded in debug prompts.
    """

    def __init__(self, message, line=None, column=None, expected=()):
        self.message = message
        self.line = line
        self.column = column
        self.expected = tuple(expected)
        super().__init__(self.__str__())

    def __str__(self):
        if self.line is None:
            return f"ParseError: {self.message}"
        return f"ParseError at line {self.line}, column {self.column}: {self.message}"


@dataclass(frozen=True)
class Token:
    kind: str  # "number", "ident", "keyword", "op", "eof"
    text: str
    pos: Pos

    def describe(self):
        if self.kind == "eof":
            return "end of input"
        return repr(self.text)


def tokenize(source: str) -> Iterator[Token]:
    """Yield tokens lazily so malformed input fails at the first bad character.

    More than MAX_TOKENS tokens is an error.
    """
    i, line, line_start = 0, 1, 0
    n = len(source)
    count = 0
    while i < n:
        m = _TOKEN_RE.match(source, i)
        pos = Pos(line, i - line_start + 1)
        if m is None:
            ch = source[i]
            shown = repr(ch) if ch.isprintable() else f"U+{ord(ch):04X}"
            raise ParseError(f"unexpected character {shown}", pos.line, pos.column)
        kind = m.lastgroup
        text = m.group()
        if kind == "ws":
            nl = text.count("\n")
            if nl:
                line += nl
                line_start = i + text.rfind("\n") + 1
        else:
            if kind == "ident" and text in KEYWORDS:
                kind = "keyword"
            count += 1
            if count > MAX_TOKENS:
                raise ParseError(f"program too long (limit {MAX_TOKENS} tokens)", pos.line, pos.column)
            yield Token(kind, text, pos)
        i = m.end()
    yield Token("eof", "", Pos(line, i - line_start + 1))


def _names(schema) -> Collection[str]:
    if schema is None:
        return frozenset()
    names = getattr(schema, "names", schema)
    return frozenset(names)


_EXPR_OPENERS = frozenset({"(", ",", "=", "return", "and", "or", "not"})


class _Parser:
    def __init__(self, source: str, features: Collection[str]):
        self._tokens = tokenize(source)
        self._tok = next(self._tokens)
        self._prev = None
        self._features = features
        self._scopes: List[set] = []
        # syntactic nesting (parentheses, unary chains, calls, if-blocks)
        self._nesting = 0

    # token helpers -------------------------------------------------------
    def _advance(self) -> Token:
        tok = self._tok
        self._prev = tok
        self._tok = next(self._tokens)
        return tok

    def _check(self, text: str) -> bool:
        return self._tok.kind in ("op", "keyword") and self._tok.text == text

    def _expect(self, text: str) -> Token:
        if not self._check(text):
            self._fail([repr(text)])
        return self._advance()

    def _expect_ident(self, what: str = "identifier") -> Token:
        if self._tok.kind != "ident":
            self._fail([what])
        return self._advance()

    def _fail(self, expected: Sequence[str]):
        tok = self._tok
        exp = sorted(set(expected))
        if len(exp) == 1:
            want = exp[0]
        else:
            want = "one of " + ", ".join(exp)
        raise ParseError(
            f"expected {want} but found {tok.describe()}",
            tok.pos.line,
            tok.pos.column,
            exp,
        )

    # scopes ----------------------------------------------------------------
    def _lookup(self, name: str) -> bool:
        return any(name in scope for scope in self._scopes)

    def _depth_ok(self, depth: int, pos: Pos) -> int:
        if depth > MAX_DEPTH:
            raise ParseError(
                f"program nested too deeply (limit {MAX_DEPTH})", pos.line, pos.column
            )
        return depth

    # grammar ---------------------------------------------------------------
    def program(self, source: str) -> PhenotypeProgram:
        self._expect("phenotype")
        name = self._expect_ident("program name").text
        self._expect("{")
        self._scopes.append(set())
        body = []
        while not self._check("return"):
            body.append(self._statement())
        ret_tok = self._advance()
        value = self._expression()
        self._expect(";")
        self._expect("}")
        if self._tok.kind != "eof":
            self._fail(["end of input"])
        self._scopes.pop()
        return PhenotypeProgram(name, tuple(body), Return(value, ret_tok.pos), source)

    def _statement(self):
        tok = self._tok
        if self._check("let"):
            self._advance()
            ident = self._expect_ident("variable name")
            name = ident.text
            if name in RESERVED:
                raise ParseError(f"'{name}' is a reserved word", *_lc(ident.pos))
            if name in self._features:
                raise ParseError(
                    f"variable '{name}' shadows a feature of the same name", *_lc(ident.pos)
                )
            if self._lookup(name):
                raise ParseError(f"variable '{name}' is already defined", *_lc(ident.pos))
            self._expect("=")
            value = self._expression()
            self._expect(";")
            self._scopes[-1].add(name)
            return Let(name, value, tok.pos)
        if self._check("if"):
            self._advance()
            self._expect("(")
            guard = self._expression()
            self._expect(")")
            self._guard_recursion(tok.pos)
            then = self._block()
            orelse = ()
            if self._check("else"):
                self._advance()
                orelse = self._block()
            self._nesting -= 1
            return If(guard, then, orelse, tok.pos)
        if tok.kind == "ident":
            self._advance()
            name = tok.text
            if not self._lookup(name):
                if name in self._features:
                    raise ParseError(f"cannot assign to feature '{name}'", *_lc(tok.pos))
                raise ParseError(
                    f"assignment to undefined variable '{name}' (declare it with 'let')",
                    *_lc(tok.pos),
                )
            self._expect("=")
            value = self._expression()
            self._expect(";")
            return Assign(name, value, tok.pos)
        self._fail(["'let'", "'if'", "'return'", "identifier"])

    def _block(self):
        self._expect("{")
        self._scopes.append(set())
        stmts = []
        while not self._check("}"):
            if self._tok.kind == "eof" or self._check("return"):
                self._fail(["'}'", "'let'", "'if'", "identifier"])
            stmts.append(self._statement())
        self._advance()
        self._scopes.pop()
        return tuple(stmts)

    def _expression(self):
        return self._or()

    def _binary(self, op, left, right, pos):
        depth = self._depth_ok(1 + max(left.depth, right.depth), pos)
        return Binary(op, left, right, pos, depth)

    def _or(self):
        left = self._and()
        while self._check("or"):
            tok = self._advance()
            left = self._binary("or", left, self._and(), tok.pos)
        return left

    def _and(self):
        left = self._not()
        while self._check("and"):
            tok = self._advance()
            left = self._binary("and", left, self._not(), tok.pos)
        return left

    def _not(self):
        if self._check("not"):
            tok = self._advance()
            # recursion is bounded by the depth check below
            self._guard_recursion(tok.pos)
            operand = self._not()
            self._nesting -= 1
            return Unary("not", operand, tok.pos, self._depth_ok(operand.depth + 1, tok.pos))
        return self._comparison()

    def _comparison(self):
        left = self._additive()
        if self._tok.kind == "op" and self._tok.text in COMPARISONS:
            tok = self._advance()
            left = self._binary(tok.text, left, self._additive(), tok.pos)
        return left

    def _additive(self):
        left = self._multiplicative()
        while self._tok.kind == "op" and self._tok.text in ("+", "-"):
            tok = self._advance()
            left = self._binary(tok.text, left, self._multiplicative(), tok.pos)
        return left

    def _multiplicative(self):
        left = self._unary()
        while self._tok.kind == "op" and self._tok.text in ("*", "/"):
            tok = self._advance()
            left = self._binary(tok.text, left, self._unary(), tok.pos)
        return left

    def _guard_recursion(self, pos):
        self._nesting += 1
        self._depth_ok(self._nesting, pos)

    def _unary(self):
        if self._check("-"):
            tok = self._advance()
            self._guard_recursion(tok.pos)
            operand = self._unary()
            self._nesting -= 1
            if isinstance(operand, Num):
                # fold so that negative constants are single tunable literals
                return Num(-operand.value, tok.pos)
            return Unary("-", operand, tok.pos, self._depth_ok(operand.depth + 1, tok.pos))
        return self._atom()

    def _atom(self):
        tok = self._tok
        if tok.kind == "number":
            self._advance()
            value = float(tok.text)
            if not math.isfinite(value):
                raise ParseError(f"numeric literal {tok.text} is out of range", *_lc(tok.pos))
            return Num(value, tok.pos)
        if tok.kind == "ident":
            self._advance()
            name = tok.text
            if name in BUILTINS:
                return self._call(name, tok)
            if not (self._lookup(name) or name in self._features):
                raise ParseError(f"unknown identifier '{name}'", *_lc(tok.pos))
            return Ref(name, tok.pos)
        if self._check("("):
            self._advance()
            self._guard_recursion(tok.pos)
            inner = self._expression()
            self._nesting -= 1
            self._expect(")")
            return inner
        # "not" is only valid where a whole expression starts (it binds looser
        # than comparisons and arithmetic)
        starts_expr = self._prev is None or self._prev.text in _EXPR_OPENERS
        self._fail(["number", "identifier", "'('", "'-'"] + (["'not'"] if starts_expr else []))

    def _call(self, name, tok):
        self._expect("(")
        self._guard_recursion(tok.pos)
        args = [self._expression()]
        while self._check(","):
            self._advance()
            args.append(self._expression())
        self._nesting -= 1
        self._expect(")")
        lo, hi = BUILTINS[name]
        if len(args) < lo or (hi is not None and len(args) > hi):
            if hi is None:
                want = f"at least {lo}"
            else:
                want = f"exactly {lo}"
            raise ParseError(
                f"{name}() takes {want} argument{'s' if lo != 1 else ''}, got {len(args)}",
                *_lc(tok.pos),
            )
        depth = self._depth_ok(1 + max(a.depth for a in args), tok.pos)
        return Call(name, tuple(args), tok.pos, depth)


def _lc(pos: Pos):
    return pos.line, pos.column


def parse(source, schema=None) -> PhenotypeProgram:
    """Parse ``source`` into a :class:`PhenotypeProgram`.

    Parameters
    ----------
    source : str or bytes
        Program text. Bytes are decoded as UTF-8.
    schema : FeatureSchema or iterable of str
        Feature names that identifiers may refer to.

    Raises
    ------
    ParseError
        On syntax errors, unresolved identifiers and excessive nesting. The
        error never escapes as anything else, whatever the input.
    """
    if isinstance(source, (bytes, bytearray)):
        try:
            source = bytes(source).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"input is not valid UTF-8 (byte offset {exc.start})") from None
    if not isinstance(source, str):
        raise ParseError(f"expected program text, got {type(source).__name__}")
    if not source.strip():
        raise ParseError("empty program")
    parser = _Parser(source, _names(schema))
    try:
        return parser.program(source)
    except RecursionError:
        raise ParseError(f"program nested too deeply (limit {MAX_DEPTH})") from None


def parse_file(path, schema=None) -> PhenotypeProgram:
    with open(path, "rb") as fh:
        return parse(fh.read(), schema)


def feature_names(schema) -> Iterable[str]:
    return _names(schema)
