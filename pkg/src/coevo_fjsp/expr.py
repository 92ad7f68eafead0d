"""Priority expressions: a small S-expression language over feature terminals.

    expr := number | terminal | "(" op expr+ ")"

Binary ops: ``sub``, ``div`` (protected: ``x / 0 -> x``). Variadic (two or
more arguments): ``add``, ``mul``, ``min``, ``max``. Unary: ``neg``,
``sqrt`` (of ``|x|``), ``log`` (of ``1 + |x|``).

Every intermediate value is clipped to ``[-VALUE_BOUND, VALUE_BOUND]`` so
evaluation on finite inputs is always finite.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

MAX_DEPTH = 12
MAX_NODES = 200
VALUE_BOUND = 1e100

UNARY = ("neg", "sqrt", "log")
BINARY = ("sub", "div")
VARIADIC = ("add", "mul", "min", "max")
OPERATORS = UNARY + BINARY + VARIADIC


class ExprError(ValueError):
    pass


class GrammarError(ExprError):
    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"{message} at position {position}")


class BoundsExceeded(ExprError):
    pass


class UnboundTerminal(ExprError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"no binding for terminal {name!r}")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Call:
    op: str
    args: tuple[Expr, ...]


Expr = Union[Num, Var, Call]


def depth(e: Expr) -> int:
    if isinstance(e, Call):
        return 1 + max(depth(a) for a in e.args)
    return 1


def size(e: Expr) -> int:
    if isinstance(e, Call):
        return 1 + sum(size(a) for a in e.args)
    return 1


def terminals(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Call):
        return set().union(*(terminals(a) for a in e.args))
    return set()


def check_bounds(e: Expr) -> None:
    d, n = depth(e), size(e)
    if d > MAX_DEPTH:
        raise BoundsExceeded(f"expression depth {d} exceeds {MAX_DEPTH}")
    if n > MAX_NODES:
        raise BoundsExceeded(f"expression has {n} nodes, limit is {MAX_NODES}")


# -- text form -----------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\()|(\))|([^\s()]+))")
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def _tokenize(text: str) -> list[tuple[str, int]]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        if m.lastindex is None:
            break
        toks.append((m.group(m.lastindex), m.start(m.lastindex)))
        pos = m.end()
    return toks


def parse_expr(text: str, allowed: Sequence[str] | None = None) -> Expr:
    """Parse S-expression text. ``allowed`` restricts the terminal names."""
    toks = _tokenize(text)
    if not toks:
        raise GrammarError("empty expression", 0)
    pos = 0

    def atom(tok: str, at: int) -> Expr:
        try:
            v = float(tok)
        except ValueError:
            pass
        else:
            if not math.isfinite(v):
                raise GrammarError(f"non-finite literal {tok!r}", at)
            return Num(v)
        if not _NAME.match(tok) or tok in OPERATORS:
            raise GrammarError(f"unexpected token {tok!r}", at)
        if allowed is not None and tok not in allowed:
            raise GrammarError(f"unknown terminal {tok!r}", at)
        return Var(tok)

    def node(level: int) -> Expr:
        nonlocal pos
        if level > MAX_DEPTH:
            # stop runaway nesting before recursion gets deep
            raise BoundsExceeded(f"expression depth exceeds {MAX_DEPTH}")
        if pos >= len(toks):
            raise GrammarError("unexpected end of expression", len(text))
        tok, at = toks[pos]
        pos += 1
        if tok == ")":
            raise GrammarError("unexpected ')'", at)
        if tok != "(":
            return atom(tok, at)
        if pos >= len(toks):
            raise GrammarError("unexpected end of expression", len(text))
        op, op_at = toks[pos]
        if op not in OPERATORS:
            raise GrammarError(f"unknown operator {op!r}", op_at)
        pos += 1
        args = []
        while pos < len(toks) and toks[pos][0] != ")":
            args.append(node(level + 1))
        if pos >= len(toks):
            raise GrammarError("missing ')'", len(text))
        pos += 1
        n = len(args)
        if (op in UNARY and n != 1) or (op in BINARY and n != 2) or (op in VARIADIC and n < 2):
            raise GrammarError(f"wrong number of arguments ({n}) for {op!r}", op_at)
        return Call(op, tuple(args))

    e = node(1)
    if pos != len(toks):
        raise GrammarError("trailing input after expression", toks[pos][1])
    check_bounds(e)
    return e


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_sexpr(e: Expr) -> str:
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return e.name
    return "(" + " ".join([e.op, *(to_sexpr(a) for a in e.args)]) + ")"


# -- evaluation ------------------------------------------------------------------


def _clip(x: np.ndarray) -> np.ndarray:
    return np.clip(x, -VALUE_BOUND, VALUE_BOUND)


def eval_vector(e: Expr, columns: Mapping[str, Sequence[float]], n: int) -> np.ndarray:
    """Evaluate ``e`` element-wise over ``n`` genes whose features are in ``columns``."""
    with np.errstate(all="ignore"):
        return _eval(e, columns, n)


def _eval(e: Expr, cols: Mapping[str, Sequence[float]], n: int) -> np.ndarray:
    if isinstance(e, Num):
        return np.full(n, e.value, dtype=float)
    if isinstance(e, Var):
        try:
            col = cols[e.name]
        except KeyError:
            raise UnboundTerminal(e.name) from None
        return _clip(np.asarray(col, dtype=float))
    args = [_eval(a, cols, n) for a in e.args]
    op = e.op
    if op == "add":
        out = args[0].copy()
        for a in args[1:]:
            out = _clip(out + a)
        return out
    if op == "mul":
        out = args[0].copy()
        for a in args[1:]:
            out = _clip(out * a)
        return out
    if op == "min":
        return np.minimum.reduce(args)
    if op == "max":
        return np.maximum.reduce(args)
    if op == "sub":
        return _clip(args[0] - args[1])
    if op == "div":
        a, b = args
        safe = np.where(b == 0, 1.0, b)
        return _clip(np.where(b == 0, a, a / safe))
    if op == "neg":
        return -args[0]
    if op == "sqrt":
        return np.sqrt(np.abs(args[0]))
    if op == "log":
        return np.log1p(np.abs(args[0]))
    raise ExprError(f"unknown operator {op!r}")  # parse_expr never builds these


def eval_expr(e: Expr, bindings: Mapping[str, float]) -> float:
    cols = {k: (v,) for k, v in bindings.items()}
    return float(eval_vector(e, cols, 1)[0])


# -- random expressions -------------------------------------------------------------


def random_expr(
    rng: random.Random,
    names: Sequence[str],
    max_depth: int = 4,
    p_leaf: float = 0.3,
) -> Expr:
    """Grow a random expression of depth at most ``max_depth`` (capped at MAX_DEPTH)."""
    max_depth = min(max_depth, MAX_DEPTH)

    def grow(d: int) -> Expr:
        if d >= max_depth or (d > 1 and rng.random() < p_leaf):
            if rng.random() < 0.8:
                return Var(rng.choice(list(names)))
            return Num(float(rng.randint(1, 10)))
        op = rng.choice(OPERATORS)
        arity = 1 if op in UNARY else 2
        return Call(op, tuple(grow(d + 1) for _ in range(arity)))

    e = grow(1)
    while size(e) > MAX_NODES:  # cannot happen for max_depth <= 7, kept for larger depths
        e = grow(1)
    return e
