"""Scalar expressions in x1, x2, x3 with exact first derivatives.

Grammar (Pratt table, loosest first)::

    + -        binary, left-assoc         bp 10
    * /        binary, left-assoc         bp 20
    -          unary negation             bp 25
    ^          power, right-assoc         bp 30   exponent must fold to a number

Functions: sin cos tan exp ln sqrt (unary) and atan2(y, x). The literal
``pi`` is accepted. Callers may bind further names (e.g. ``H``) to
previously parsed expressions; bound names are inlined into the tree.

Three evaluation paths share one set of derivative formulas:

* :func:`evaluate` / :func:`eval_grad` walk the tree with floats / :class:`Dual3`;
* :func:`compile_kernel` emits straight-line Python for a batch of expressions
  (common subexpressions computed once), used in hot loops;
* ``compile_kernel(..., vectorized=True)`` emits the same code over numpy arrays.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import DomainError, ExprSyntaxError, UnknownIdentifier

__all__ = [
    "Var", "Num", "Neg", "BinOp", "Pow", "Call", "Expr", "Dual3",
    "parse", "to_text", "evaluate", "eval_grad", "compile_kernel", "Kernel",
    "is_constant", "FUNCTIONS",
]


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Var:
    index: int  # 0, 1, 2 for x1, x2, x3

    def __post_init__(self):
        if self.index not in (0, 1, 2):
            raise ValueError(f"variable index must be 0..2, got {self.index}")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"

    def __post_init__(self):
        if self.op not in ("+", "-", "*", "/"):
            raise ValueError(f"unknown binary operator {self.op!r}")


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: float


FUNCTIONS = {"sin": 1, "cos": 1, "tan": 1, "exp": 1, "ln": 1, "sqrt": 1, "atan2": 2}


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple

    def __post_init__(self):
        arity = FUNCTIONS.get(self.name)
        if arity is None:
            raise ValueError(f"unknown function {self.name!r}")
        if len(self.args) != arity:
            raise ValueError(f"{self.name} takes {arity} argument(s), got {len(self.args)}")


Expr = Union[Var, Num, Neg, BinOp, Pow, Call]


def is_constant(e: Expr) -> bool:
    if isinstance(e, Var):
        return False
    if isinstance(e, Num):
        return True
    if isinstance(e, Neg):
        return is_constant(e.arg)
    if isinstance(e, BinOp):
        return is_constant(e.left) and is_constant(e.right)
    if isinstance(e, Pow):
        return is_constant(e.base)
    return all(is_constant(a) for a in e.args)


# ---------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)

_BINARY_BP = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 30}
_UNARY_BP = 25
_VARS = {"x1": 0, "x2": 1, "x3": 2}
_CONSTANTS = {"pi": math.pi}


def _tokenize(text: str):
    pos = 0
    out = []
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = len(text) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", text, bad,
                                  "number, identifier or operator")
        kind = m.lastgroup
        start = m.start(kind)
        out.append((kind, m.group(kind), start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, bindings: Mapping[str, Expr]):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.bindings = bindings

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, tok, expected):
        kind, value, pos = tok
        what = "end of input" if kind == "end" else f"{value!r}"
        raise ExprSyntaxError(f"unexpected {what}", self.text, pos, expected)

    def expect(self, value):
        tok = self.advance()
        if tok[1] != value or tok[0] != "op":
            self.fail(tok, repr(value))
        return tok

    def expression(self, rbp: int = 0) -> Expr:
        left = self.nud(self.advance())
        while True:
            kind, value, _ = self.peek()
            if kind != "op" or value not in _BINARY_BP or _BINARY_BP[value] <= rbp:
                return left
            self.advance()
            left = self.led(value, left)

    def nud(self, tok) -> Expr:
        kind, value, pos = tok
        if kind == "num":
            v = float(value)
            if not math.isfinite(v):
                raise ExprSyntaxError("numeric literal out of range", self.text, pos, "finite number")
            return Num(v)
        if kind == "name":
            return self.name(value, pos)
        if kind == "op" and value == "(":
            inner = self.expression()
            self.expect(")")
            return inner
        if kind == "op" and value == "-":
            return Neg(self.expression(_UNARY_BP))
        if kind == "op" and value == "+":
            return self.expression(_UNARY_BP)
        self.fail(tok, "number, variable, function or '('")

    def name(self, value: str, pos: int) -> Expr:
        if value in _VARS:
            return Var(_VARS[value])
        if value in FUNCTIONS:
            self.expect("(")
            args = [self.expression()]
            while self.peek()[1] == ",":
                self.advance()
                args.append(self.expression())
            close = self.peek()
            if close[1] != ")":
                self.fail(close, "')'" if len(args) >= FUNCTIONS[value] else "','")
            self.advance()
            if len(args) != FUNCTIONS[value]:
                raise ExprSyntaxError(
                    f"{value} takes {FUNCTIONS[value]} argument(s), got {len(args)}",
                    self.text, pos, f"{FUNCTIONS[value]} argument(s)")
            return Call(value, tuple(args))
        if value in self.bindings:
            return self.bindings[value]
        if value in _CONSTANTS:
            return Num(_CONSTANTS[value])
        raise UnknownIdentifier(value, pos)

    def led(self, op: str, left: Expr) -> Expr:
        if op == "^":
            pos = self.peek()[2]
            exponent = self.expression(_BINARY_BP["^"] - 1)
            if not is_constant(exponent):
                raise ExprSyntaxError("exponent must be a numeric constant", self.text, pos,
                                      "numeric exponent")
            return Pow(left, evaluate(exponent, (0.0, 0.0, 0.0)))
        return BinOp(op, left, self.expression(_BINARY_BP[op]))


def parse(text: str, bindings: Mapping[str, Expr] | None = None) -> Expr:
    """Parse ``text`` into an :class:`Expr`.

    ``bindings`` maps extra identifiers to expressions that are substituted
    in place (variables and function names cannot be rebound).
    """
    if not isinstance(text, str):
        raise TypeError("expression text must be a string")
    p = _Parser(text, dict(bindings or {}))
    if p.peek()[0] == "end":
        raise ExprSyntaxError("empty expression", text, 0, "an expression")
    e = p.expression()
    tok = p.peek()
    if tok[0] != "end":
        p.fail(tok, "operator or end of input")
    return e


def _num_text(v: float) -> str:
    s = repr(float(v))
    return f"({s})" if s.startswith("-") else s


def to_text(e: Expr) -> str:
    """Fully parenthesized text that parses back to the same tree."""
    if isinstance(e, Var):
        return f"x{e.index + 1}"
    if isinstance(e, Num):
        return _num_text(e.value)
    if isinstance(e, Neg):
        return f"(-{to_text(e.arg)})"
    if isinstance(e, BinOp):
        return f"({to_text(e.left)} {e.op} {to_text(e.right)})"
    if isinstance(e, Pow):
        return f"({to_text(e.base)} ^ {_num_text(e.exponent)})"
    return f"{e.name}({', '.join(to_text(a) for a in e.args)})"


# ---------------------------------------------------------------------------
# Float evaluation

def _check_pow(base: float, exponent: float):
    if base < 0.0 and exponent != int(exponent):
        raise DomainError(f"negative base {base!r} raised to non-integer power {exponent!r}")


def _eval(e: Expr, p) -> float:
    if isinstance(e, Var):
        return p[e.index]
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Neg):
        return -_eval(e.arg, p)
    if isinstance(e, BinOp):
        if e.op in "+-":
            return math.fsum(_terms(e, p, 1.0, []))
        a = _eval(e.left, p)
        b = _eval(e.right, p)
        if e.op == "*":
            return a * b
        return a / b
    if isinstance(e, Pow):
        a = _eval(e.base, p)
        _check_pow(a, e.exponent)
        return a ** e.exponent
    args = [_eval(a, p) for a in e.args]
    if e.name == "atan2":
        return math.atan2(args[0], args[1])
    return _FLOAT_FUNCS[e.name](args[0])


def _terms(e: Expr, p, sign: float, out: list) -> list:
    """Signed summands of an additive chain, so the sum is rounded once."""
    if isinstance(e, BinOp) and e.op in "+-":
        _terms(e.left, p, sign, out)
        _terms(e.right, p, sign if e.op == "+" else -sign, out)
    else:
        out.append(sign * _eval(e, p))
    return out


_FLOAT_FUNCS = {
    "sin": math.sin, "cos": math.cos, "tan": math.tan,
    "exp": math.exp, "ln": math.log, "sqrt": math.sqrt,
}


def evaluate(e: Expr, p: Sequence[float]) -> float:
    """Value of ``e`` at ``p``; raises :class:`DomainError` outside the domain."""
    try:
        v = _eval(e, (float(p[0]), float(p[1]), float(p[2])))
    except (ZeroDivisionError, ValueError, OverflowError) as exc:
        raise DomainError(f"{to_text(e)} at {tuple(p)}: {exc}") from exc
    if not math.isfinite(v):
        raise DomainError(f"{to_text(e)} is not finite at {tuple(p)}")
    return v


# ---------------------------------------------------------------------------
# Dual numbers

class Dual3:
    """Value plus the three partial derivatives, propagated by the chain rule."""

    __slots__ = ("value", "partials")

    def __init__(self, value: float, partials=(0.0, 0.0, 0.0)):
        self.value = float(value)
        self.partials = tuple(partials)

    @classmethod
    def variable(cls, value: float, index: int) -> "Dual3":
        d = [0.0, 0.0, 0.0]
        d[index] = 1.0
        return cls(value, d)

    def __repr__(self):
        return f"Dual3({self.value!r}, {self.partials!r})"

    @staticmethod
    def _lift(x) -> "Dual3":
        return x if isinstance(x, Dual3) else Dual3(x)

    def __add__(self, o):
        o = Dual3._lift(o)
        return Dual3(self.value + o.value, [a + b for a, b in zip(self.partials, o.partials)])

    __radd__ = __add__

    def __sub__(self, o):
        o = Dual3._lift(o)
        return Dual3(self.value - o.value, [a - b for a, b in zip(self.partials, o.partials)])

    def __rsub__(self, o):
        return Dual3._lift(o) - self

    def __neg__(self):
        return Dual3(-self.value, [-a for a in self.partials])

    def __mul__(self, o):
        o = Dual3._lift(o)
        a, b = self.value, o.value
        return Dual3(a * b, [da * b + a * db for da, db in zip(self.partials, o.partials)])

    __rmul__ = __mul__

    def __truediv__(self, o):
        o = Dual3._lift(o)
        b = o.value
        v = self.value / b
        return Dual3(v, [(da - v * db) / b for da, db in zip(self.partials, o.partials)])

    def __rtruediv__(self, o):
        return Dual3._lift(o) / self

    def __pow__(self, exponent: float):
        a = self.value
        _check_pow(a, exponent)
        if exponent == 0.0:
            return Dual3(1.0)
        if exponent == 1.0:
            return Dual3(a, self.partials)
        c = exponent * a ** (exponent - 1.0)
        return Dual3(a ** exponent, [c * d for d in self.partials])

    def _unary(self, value: float, slope: float) -> "Dual3":
        return Dual3(value, [slope * d for d in self.partials])

    def sin(self):
        return self._unary(math.sin(self.value), math.cos(self.value))

    def cos(self):
        return self._unary(math.cos(self.value), -math.sin(self.value))

    def tan(self):
        t = math.tan(self.value)
        return self._unary(t, 1.0 + t * t)

    def exp(self):
        v = math.exp(self.value)
        return self._unary(v, v)

    def ln(self):
        v = math.log(self.value)
        return Dual3(v, [d / self.value for d in self.partials])

    def sqrt(self):
        v = math.sqrt(self.value)
        return self._unary(v, 0.5 / v)

    @staticmethod
    def atan2(y: "Dual3", x: "Dual3") -> "Dual3":
        y, x = Dual3._lift(y), Dual3._lift(x)
        den = x.value * x.value + y.value * y.value
        v = math.atan2(y.value, x.value)
        return Dual3(v, [(x.value * dy - y.value * dx) / den
                         for dy, dx in zip(y.partials, x.partials)])


def _eval_dual(e: Expr, p) -> Dual3:
    if isinstance(e, Var):
        return p[e.index]
    if isinstance(e, Num):
        return Dual3(e.value)
    if isinstance(e, Neg):
        return -_eval_dual(e.arg, p)
    if isinstance(e, BinOp):
        a = _eval_dual(e.left, p)
        b = _eval_dual(e.right, p)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        return a / b
    if isinstance(e, Pow):
        return _eval_dual(e.base, p) ** e.exponent
    args = [_eval_dual(a, p) for a in e.args]
    if e.name == "atan2":
        return Dual3.atan2(args[0], args[1])
    return getattr(args[0], e.name)()


def eval_grad(e: Expr, p: Sequence[float]) -> tuple[float, tuple[float, float, float]]:
    """Value and exact gradient of ``e`` at ``p``."""
    point = tuple(Dual3.variable(float(p[i]), i) for i in range(3))
    try:
        d = _eval_dual(e, point)
    except (ZeroDivisionError, ValueError, OverflowError) as exc:
        raise DomainError(f"{to_text(e)} at {tuple(p)}: {exc}") from exc
    if not (math.isfinite(d.value) and all(math.isfinite(x) for x in d.partials)):
        raise DomainError(f"{to_text(e)} or its gradient is not finite at {tuple(p)}")
    return d.value, d.partials


# ---------------------------------------------------------------------------
# Code generation

class _Gen:
    """Emits straight-line code; values and partials are names or literals."""

    def __init__(self, vectorized: bool):
        self.vectorized = vectorized
        self.lines: list[str] = []
        self.memo: dict = {}
        self.count = 0

    def tmp(self, code: str) -> str:
        name = f"t{self.count}"
        self.count += 1
        self.lines.append(f"{name} = {code}")
        return name

    def emit(self, e: Expr, grad: bool):
        hit = self.memo.get((e, grad))
        if hit is not None:
            return hit
        if not grad and (e, True) in self.memo:
            return self.memo[(e, True)][0], (None, None, None)
        out = self._emit(e, grad)
        self.memo[(e, grad)] = out
        return out

    # helpers combining optional partials (None means identically zero)
    def _add(self, x, y):
        if x is None:
            return y
        if y is None:
            return x
        return self.tmp(f"{x} + {y}")

    def _sub(self, x, y):
        if y is None:
            return x
        if x is None:
            return self.tmp(f"-{y}")
        return self.tmp(f"{x} - {y}")

    def _scale(self, c, x):
        if x is None:
            return None
        return c if x == "1.0" else self.tmp(f"{c} * {x}")

    def _emit(self, e: Expr, grad: bool):
        none3 = (None, None, None)
        if isinstance(e, Var):
            name = f"x{e.index + 1}"
            ds = tuple("1.0" if i == e.index else None for i in range(3))
            return name, (ds if grad else none3)
        if isinstance(e, Num):
            return repr(e.value), none3
        if isinstance(e, Neg):
            a, da = self.emit(e.arg, grad)
            return self.tmp(f"-{a}"), tuple(None if d is None else self.tmp(f"-{d}") for d in da)
        if isinstance(e, BinOp):
            a, da = self.emit(e.left, grad)
            b, db = self.emit(e.right, grad)
            if e.op == "+":
                return self.tmp(f"{a} + {b}"), tuple(self._add(x, y) for x, y in zip(da, db))
            if e.op == "-":
                return self.tmp(f"{a} - {b}"), tuple(self._sub(x, y) for x, y in zip(da, db))
            if e.op == "*":
                v = self.tmp(f"{a} * {b}")
                return v, tuple(self._add(self._scale(b, x), self._scale(a, y))
                                for x, y in zip(da, db))
            v = self.tmp(f"{a} / {b}")
            ds = []
            for x, y in zip(da, db):
                if y is None:
                    ds.append(None if x is None else self.tmp(f"{x} / {b}"))
                elif x is None:
                    ds.append(self.tmp(f"(0.0 - {v} * {y}) / {b}"))
                else:
                    ds.append(self.tmp(f"({x} - {v} * {y}) / {b}"))
            return v, tuple(ds)
        if isinstance(e, Pow):
            a, da = self.emit(e.base, grad)
            k = e.exponent
            if k == 0.0:
                return "1.0", none3
            if k == 1.0:
                return a, da
            if k != int(k) and not self.vectorized:
                self.lines.append(f"_check_pow({a}, {k!r})")
            v = self.tmp(f"{a} ** {k!r}")
            if all(d is None for d in da):
                return v, none3
            c = self.tmp(f"{k!r} * {a} ** {k - 1.0!r}")
            return v, tuple(self._scale(c, d) for d in da)
        args = [self.emit(a, grad) for a in e.args]
        if e.name == "atan2":
            (y, dy), (x, dx) = args
            v = self.tmp(f"_atan2({y}, {x})")
            if all(d is None for d in dy + dx):
                return v, none3
            den = self.tmp(f"{x} * {x} + {y} * {y}")
            ds = []
            for ddy, ddx in zip(dy, dx):
                if ddy is None and ddx is None:
                    ds.append(None)
                    continue
                num = f"{x} * {ddy if ddy is not None else '0.0'} - {y} * {ddx if ddx is not None else '0.0'}"
                ds.append(self.tmp(f"({num}) / {den}"))
            return v, tuple(ds)
        (a, da), = args
        name = e.name
        if name == "sin":
            v = self.tmp(f"_sin({a})")
            slope = None if all(d is None for d in da) else self.tmp(f"_cos({a})")
        elif name == "cos":
            v = self.tmp(f"_cos({a})")
            slope = None if all(d is None for d in da) else self.tmp(f"-_sin({a})")
        elif name == "tan":
            v = self.tmp(f"_tan({a})")
            slope = None if all(d is None for d in da) else self.tmp(f"1.0 + {v} * {v}")
        elif name == "exp":
            v = self.tmp(f"_exp({a})")
            slope = v
        elif name == "ln":
            v = self.tmp(f"_log({a})")
            return v, tuple(None if d is None else self.tmp(f"{d} / {a}") for d in da)
        else:
            v = self.tmp(f"_sqrt({a})")
            slope = None if all(d is None for d in da) else self.tmp(f"0.5 / {v}")
        return v, tuple(self._scale(slope, d) for d in da)


_SCALAR_NS = {
    "_sin": math.sin, "_cos": math.cos, "_tan": math.tan, "_exp": math.exp,
    "_log": math.log, "_sqrt": math.sqrt, "_atan2": math.atan2, "_check_pow": _check_pow,
    "DomainError": DomainError,
}

_VECTOR_NS = {
    "_sin": np.sin, "_cos": np.cos, "_tan": np.tan, "_exp": np.exp,
    "_log": np.log, "_sqrt": np.sqrt, "_atan2": np.arctan2,
}


@dataclass(frozen=True)
class Kernel:
    """Compiled batch of expressions.

    ``fn(x1, x2, x3)`` returns a flat tuple: for each expression its value,
    followed by its three partials when compiled with ``grad=True``.
    ``offsets[i]`` is the position of expression ``i`` in that tuple.
    """

    fn: Callable
    source: str
    offsets: tuple
    grads: tuple
    vectorized: bool

    def __call__(self, p):
        return self.fn(p[0], p[1], p[2])


def compile_kernel(exprs: Iterable[Expr], grads: Iterable[bool] | bool = True,
                   vectorized: bool = False, name: str = "kernel") -> Kernel:
    exprs = list(exprs)
    if isinstance(grads, bool):
        grads = [grads] * len(exprs)
    grads = [bool(g) for g in grads]
    if len(grads) != len(exprs):
        raise ValueError("grads must match exprs in length")
    gen = _Gen(vectorized)
    outputs = []
    offsets = []
    for e, g in zip(exprs, grads):
        offsets.append(len(outputs))
        v, ds = gen.emit(e, g)
        outputs.append(v)
        if g:
            outputs.extend(d if d is not None else "0.0" for d in ds)
    body = ["    " + line for line in gen.lines]
    if vectorized:
        src = [f"def {name}(x1, x2, x3):",
               "    x1 = _asarray(x1, dtype=float)",
               "    x2 = _asarray(x2, dtype=float)",
               "    x3 = _asarray(x3, dtype=float)",
               "    _z = _zeros(_broadcast_shapes(x1.shape, x2.shape, x3.shape))",
               "    with _errstate(all='ignore'):"]
        src += ["    " + line for line in body]
        src.append("        _out = (" + "".join(f"{o} + _z, " for o in outputs) + ")")
        src.append("    _check_finite(_out)")
        src.append("    return _out")
        ns = dict(_VECTOR_NS, _asarray=np.asarray, _zeros=np.zeros,
                  _broadcast_shapes=np.broadcast_shapes, _errstate=np.errstate,
                  _check_finite=_check_finite)
    else:
        src = [f"def {name}(x1, x2, x3):", "    try:"]
        src += ["    " + line for line in body]
        src.append("        return (" + "".join(f"{o}, " for o in outputs) + ")")
        src.append("    except (ZeroDivisionError, ValueError, OverflowError) as exc:")
        src.append("        raise DomainError(f'{exc} at ({x1!r}, {x2!r}, {x3!r})') from exc")
        ns = dict(_SCALAR_NS)
    source = "\n".join(src) + "\n"
    exec(compile(source, f"<{name}>", "exec"), ns)
    return Kernel(ns[name], source, tuple(offsets), tuple(grads), vectorized)


def _check_finite(arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DomainError("expression or gradient not finite on part of the batch")
