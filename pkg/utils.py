# utils.py
"""
Closed-form expressions for boundary data and forcing, plus console tables.

Expressions are parsed once into a tree of numpy closures and evaluated on
batches of reference points:

    >>> expr = parse_expression("-3*(x - 0.5)**2")
    >>> expr(np.array([[0.0, 1.0]]))
    array([-0.75])

Variables: x, y, z (aliases X, Y, Z) and the loading fraction t. Constants
pi and e. Comparisons use an absolute tolerance so that `y == 1` selects
boundary faces; `and`, `or`, `not` combine them.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from errors import ConfigurationError

# ─────────────────────────── constants ────────────────────────────
COMPARE_TOL = 1e-9
COORDS = {"x": 0, "y": 1, "z": 2, "X": 0, "Y": 1, "Z": 2}
CONSTANTS = {"pi": math.pi, "e": math.e}
FUNCTIONS: dict[str, tuple[Callable[..., Any], int]] = {
    "sin": (np.sin, 1), "cos": (np.cos, 1), "tan": (np.tan, 1),
    "asin": (np.arcsin, 1), "acos": (np.arccos, 1), "atan": (np.arctan, 1),
    "atan2": (np.arctan2, 2),
    "sinh": (np.sinh, 1), "cosh": (np.cosh, 1), "tanh": (np.tanh, 1),
    "exp": (np.exp, 1), "log": (np.log, 1), "sqrt": (np.sqrt, 1), "abs": (np.abs, 1),
    "min": (np.minimum, 2), "max": (np.maximum, 2), "where": (np.where, 3),
}
# ──────────────────────────────────────────────────────────────────

# ─────────────────────────── regex helpers ────────────────────────
_TOKEN_RE = re.compile(r'''
    \s*(?:
        (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)   # 1, 2.5, .5, 1e-3
      | (?P<name>[A-Za-z_]\w*)                           # variable / function / keyword
      | (?P<op>\*\*|<=|>=|==|!=|[-+*/^(),<>])            # operators
    )''', re.X)
_KEYWORDS = {"and", "or", "not"}
# ──────────────────────────────────────────────────────────────────


def tokenize(text: str) -> list[tuple[str, str, int]]:
    """(kind, value, column) triples; raises on characters outside the grammar."""
    out, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise ConfigurationError(f"unexpected character {text[pos:].strip()[:1]!r} "
                                     f"at column {pos + 1} in {text!r}")
        kind = m.lastgroup
        value = m.group(kind)
        if kind == "name" and value in _KEYWORDS:
            kind = "op"
        out.append((kind, value, m.start(kind) + 1))
        pos = m.end()
    return out


Node = Callable[[np.ndarray, float], Any]


class _Parser:
    """Recursive descent; every rule returns a closure f(X, t)."""

    def __init__(self, text: str) -> None:
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0
        self.names: set[str] = set()

    # ---------- token helpers ----------
    def peek(self) -> tuple[str, str, int] | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def accept(self, *values: str) -> str | None:
        tok = self.peek()
        if tok and tok[0] == "op" and tok[1] in values:
            self.pos += 1
            return tok[1]
        return None

    def expect(self, value: str) -> None:
        if not self.accept(value):
            self.fail(f"expected {value!r}")

    def fail(self, message: str) -> None:
        tok = self.peek()
        where = f"column {tok[2]}" if tok else "end of input"
        raise ConfigurationError(f"{message} at {where} in {self.text!r}")

    # ---------- grammar ----------
    def parse(self) -> Node:
        if not self.tokens:
            raise ConfigurationError("empty expression")
        node = self.disjunction()
        if self.peek() is not None:
            self.fail("unexpected token")
        return node

    def disjunction(self) -> Node:
        node = self.conjunction()
        while self.accept("or"):
            lhs, rhs = node, self.conjunction()
            node = lambda X, t, a=lhs, b=rhs: np.logical_or(a(X, t), b(X, t))
        return node

    def conjunction(self) -> Node:
        node = self.negation()
        while self.accept("and"):
            lhs, rhs = node, self.negation()
            node = lambda X, t, a=lhs, b=rhs: np.logical_and(a(X, t), b(X, t))
        return node

    def negation(self) -> Node:
        if self.accept("not"):
            inner = self.negation()
            return lambda X, t: np.logical_not(inner(X, t))
        return self.comparison()

    def comparison(self) -> Node:
        node = self.sum()
        op = self.accept("<", "<=", ">", ">=", "==", "!=")
        if op is None:
            return node
        lhs, rhs = node, self.sum()
        tol = COMPARE_TOL
        table = {
            "<": lambda a, b: a < b - tol, "<=": lambda a, b: a <= b + tol,
            ">": lambda a, b: a > b + tol, ">=": lambda a, b: a >= b - tol,
            "==": lambda a, b: np.abs(a - b) <= tol, "!=": lambda a, b: np.abs(a - b) > tol,
        }
        fn = table[op]
        return lambda X, t: fn(lhs(X, t), rhs(X, t))

    def sum(self) -> Node:
        node = self.term()
        while (op := self.accept("+", "-")) is not None:
            lhs, rhs = node, self.term()
            node = (lambda X, t, a=lhs, b=rhs: a(X, t) + b(X, t)) if op == "+" else \
                   (lambda X, t, a=lhs, b=rhs: a(X, t) - b(X, t))
        return node

    def term(self) -> Node:
        node = self.unary()
        while (op := self.accept("*", "/")) is not None:
            lhs, rhs = node, self.unary()
            node = (lambda X, t, a=lhs, b=rhs: a(X, t) * b(X, t)) if op == "*" else \
                   (lambda X, t, a=lhs, b=rhs: a(X, t) / b(X, t))
        return node

    def unary(self) -> Node:
        if self.accept("-"):
            inner = self.unary()
            return lambda X, t: -inner(X, t)
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.accept("**", "^"):
            expo = self.unary()                 # right associative
            return lambda X, t: np.power(base(X, t), expo(X, t))
        return base

    def atom(self) -> Node:
        tok = self.peek()
        if tok is None:
            self.fail("unexpected end of expression")
        kind, value, _ = tok
        if kind == "num":
            self.pos += 1
            v = float(value)
            return lambda X, t: v
        if kind == "name":
            self.pos += 1
            if self.accept("("):
                return self.call(value)
            return self.variable(value)
        if self.accept("("):
            node = self.disjunction()
            self.expect(")")
            return node
        self.fail(f"unexpected {value!r}")

    def call(self, name: str) -> Node:
        if name not in FUNCTIONS:
            self.fail(f"unknown function {name!r}")
        fn, arity = FUNCTIONS[name]
        args = [self.disjunction()]
        while self.accept(","):
            args.append(self.disjunction())
        self.expect(")")
        if len(args) != arity:
            raise ConfigurationError(f"{name}() takes {arity} argument(s), got {len(args)} in {self.text!r}")
        return lambda X, t: fn(*(a(X, t) for a in args))

    def variable(self, name: str) -> Node:
        self.names.add(name)
        if name in COORDS:
            axis = COORDS[name]
            return lambda X, t: X[..., axis]
        if name == "t":
            return lambda X, t: t
        if name in CONSTANTS:
            v = CONSTANTS[name]
            return lambda X, t: v
        self.fail(f"unknown name {name!r}")


@dataclass(frozen=True)
class Expression:
    text: str
    names: frozenset[str]
    _node: Node

    @property
    def uses_t(self) -> bool:
        return "t" in self.names

    @property
    def max_axis(self) -> int:
        axes = [COORDS[n] for n in self.names if n in COORDS]
        return max(axes, default=-1)

    def __call__(self, X: np.ndarray, t: float = 1.0) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] <= self.max_axis:
            raise ConfigurationError(f"{self.text!r} refers to coordinate {'xyz'[self.max_axis]} "
                                     f"in a {X.shape[-1]}-D problem")
        return np.broadcast_to(self._node(X, t), X.shape[:-1])


def parse_expression(text: str | float | int) -> Expression:
    text = str(text)
    parser = _Parser(text)
    node = parser.parse()
    return Expression(text, frozenset(parser.names), node)


@dataclass(frozen=True)
class VectorExpression:
    """One expression per component; evaluates to (n, d)."""
    components: tuple[Expression, ...]

    @property
    def uses_t(self) -> bool:
        return any(c.uses_t for c in self.components)

    @property
    def texts(self) -> list[str]:
        return [c.text for c in self.components]

    def __call__(self, X: np.ndarray, t: float = 1.0) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != len(self.components):
            raise ConfigurationError(f"vector field has {len(self.components)} components, "
                                     f"the problem is {X.shape[-1]}-D")
        return np.stack([np.asarray(c(X, t), dtype=float) for c in self.components], axis=-1)


def parse_vector(texts: Sequence[str | float | int] | str) -> VectorExpression:
    if isinstance(texts, str):
        texts = [texts]
    return VectorExpression(tuple(parse_expression(s) for s in texts))


# ─────────────────────── pretty-print tables ──────────────────────
def format_value(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        if math.isnan(value):
            return "undefined"
        return f"{value:.3e}" if value != 0.0 and (abs(value) < 1e-2 or abs(value) >= 1e4) else f"{value:.4g}"
    return str(value)


def format_table(headers: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Human-friendly fixed-width console table."""
    body = [[format_value(v) for v in row] for row in rows]
    widths = [max([len(h)] + [len(r[i]) for r in body]) for i, h in enumerate(headers)]
    line = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
    rule = "  ".join("-" * w for w in widths)
    return "\n".join([line, rule] + ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in body])
