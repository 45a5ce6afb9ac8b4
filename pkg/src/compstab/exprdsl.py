"""Scalar expression language for vector-field components.

Grammar (whitespace insignificant, no implicit multiplication)::

    expr   := term (("+" | "-") term)*
    term   := ["-"] factor (("*" | "/") factor)*
    factor := "-" factor | base ["^" uint]
    base   := number | ident | "(" expr ")" | func "(" expr ")"

A leading minus on a term negates the whole product, so ``-2*x1`` parses
as ``Neg(Mul(2, x1))``.  Inside a product (``a*-b``) the minus binds to a
single factor.  ``^`` binds tighter than unary minus: ``-x1^2`` is
``Neg(Pow(x1, 2))``.

Variables are ``x1..xn`` (state) and ``u1..um`` (control).  Functions are
``cbrt sqrt sin cos exp abs``; ``cbrt`` is the real cube root.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DomainError, ParseError

FUNCTIONS = ("cbrt", "sqrt", "sin", "cos", "exp", "abs")
_VAR_RE = re.compile(r"^([xu])([1-9][0-9]*)$")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str

    @property
    def kind(self) -> str:
        return self.name[0]

    @property
    def index(self) -> int:
        """Zero-based index into the state or control vector."""
        return int(self.name[1:]) - 1


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exp: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Pow, Call]


def Add(a, b):
    return BinOp("+", a, b)


def Sub(a, b):
    return BinOp("-", a, b)


def Mul(a, b):
    return BinOp("*", a, b)


def Div(a, b):
    return BinOp("/", a, b)


# ---------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", _offset(text, pos))
        kind = m.lastgroup
        if kind == "num":
            end = m.end()
            # "1.2.3", "1e", "2x1": a number glued to more number-ish text
            if end < len(text) and (text[end] == "." or text[end].isalnum() or text[end] == "_"):
                raise ParseError(f"malformed number {text[pos:end + 1]!r}", _offset(text, pos))
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def _offset(text, pos):
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        found = "end of input" if tok[0] == "end" else repr(tok[1])
        return ParseError(f"{message}, found {found}", _offset(self.text, tok[2]))

    def expect(self, value):
        tok = self.peek()
        if tok[0] != "op" or tok[1] != value:
            raise self.error(f"expected {value!r}")
        return self.take()

    def is_op(self, *values):
        tok = self.peek()
        return tok[0] == "op" and tok[1] in values

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error("unexpected token")
        return node

    def expr(self):
        node = self.term()
        while self.is_op("+", "-"):
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        negate = False
        if self.is_op("-"):
            self.take()
            negate = True
        node = self.factor()
        while self.is_op("*", "/"):
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return Neg(node) if negate else node

    def factor(self):
        if self.is_op("-"):
            self.take()
            return Neg(self.factor())
        node = self.base()
        if self.is_op("^"):
            self.take()
            tok = self.peek()
            if tok[0] != "num" or not tok[1].isdigit():
                raise self.error("expected non-negative integer exponent")
            self.take()
            node = Pow(node, int(tok[1]))
        return node

    def base(self):
        tok = self.peek()
        kind, value, _ = tok
        if kind == "num":
            self.take()
            return Num(float(value))
        if kind == "ident":
            self.take()
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(value, arg)
            if _VAR_RE.match(value):
                return Var(value)
            raise ParseError(f"unknown identifier {value!r}", _offset(self.text, tok[2]))
        if self.is_op("("):
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        raise self.error("expected number, identifier or '('")


def parse(text: str) -> Expr:
    """Parse an expression string into an AST.

    Raises ParseError (with ``offset``) on bad syntax, unknown identifiers
    and malformed numbers.
    """
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    return _Parser(text).parse()


# ------------------------------------------------------------------ printer

_P_EXPR, _P_SUMRIGHT, _P_PRODLEFT, _P_PRODRIGHT, _P_NEGTERM, _P_NEGFACTOR, _P_BASE = range(7)


def _is_factor(node) -> bool:
    """True if ``node`` prints as a single grammar factor without parentheses."""
    if isinstance(node, Neg):
        return _is_factor(node.arg)
    if isinstance(node, Num):
        return node.value >= 0
    return isinstance(node, (Var, Call, Pow))


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def to_string(node: Expr) -> str:
    """Render an AST so that ``parse(to_string(a)) == a`` for parsed ASTs."""
    return _print(node, _P_EXPR)


def _print(node, pos) -> str:
    if isinstance(node, Num):
        s = _fmt_num(node.value)
        return f"({s})" if node.value < 0 else s
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({_print(node.arg, _P_EXPR)})"
    if isinstance(node, Pow):
        if pos == _P_BASE:
            return "(" + _print(node, _P_EXPR) + ")"
        return f"{_print(node.base, _P_BASE)}^{node.exp}"
    if isinstance(node, Neg):
        if pos in (_P_EXPR, _P_SUMRIGHT):
            return "-" + _print(node.arg, _P_NEGTERM)
        if pos in (_P_PRODRIGHT, _P_NEGTERM, _P_NEGFACTOR) and _is_factor(node.arg):
            return "-" + _print(node.arg, _P_NEGFACTOR)
        return "(" + _print(node, _P_EXPR) + ")"
    if isinstance(node, BinOp):
        if node.op in "+-":
            if pos != _P_EXPR:
                return "(" + _print(node, _P_EXPR) + ")"
            return f"{_print(node.left, _P_EXPR)} {node.op} {_print(node.right, _P_SUMRIGHT)}"
        if pos in (_P_EXPR, _P_SUMRIGHT, _P_PRODLEFT, _P_NEGTERM):
            return f"{_print(node.left, _P_PRODLEFT)}{node.op}{_print(node.right, _P_PRODRIGHT)}"
        return "(" + _print(node, _P_EXPR) + ")"
    raise TypeError(f"not an expression node: {node!r}")


# --------------------------------------------------------------- evaluation

def _cbrt(a):
    return float(np.cbrt(a))


def _sqrt(a):
    if a < 0:
        raise DomainError(f"sqrt of negative value {a!r}")
    return math.sqrt(a)


_FUNC_IMPL = {
    "cbrt": _cbrt,
    "sqrt": _sqrt,
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "abs": abs,
}


def evaluate(node: Expr, x: Sequence[float] = (), u: Sequence[float] = ()) -> float:
    """Evaluate ``node`` in IEEE double precision by direct tree walk."""
    try:
        return _eval(node, x, u)
    except ZeroDivisionError as exc:
        raise DomainError("division by zero") from exc
    except (OverflowError, ValueError) as exc:
        raise DomainError(str(exc)) from exc


def _eval(node, x, u):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        vec = x if node.kind == "x" else u
        if node.index >= len(vec):
            raise IndexError(f"variable {node.name} outside declared dimensions")
        return float(vec[node.index])
    if isinstance(node, Neg):
        return -_eval(node.arg, x, u)
    if isinstance(node, BinOp):
        a = _eval(node.left, x, u)
        b = _eval(node.right, x, u)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if b == 0.0:
            raise ZeroDivisionError
        return a / b
    if isinstance(node, Pow):
        return _eval(node.base, x, u) ** node.exp
    if isinstance(node, Call):
        return _FUNC_IMPL[node.func](_eval(node.arg, x, u))
    raise TypeError(f"not an expression node: {node!r}")


def variables(node: Expr) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Neg, Call)):
        return variables(node.arg)
    if isinstance(node, Pow):
        return variables(node.base)
    return variables(node.left) | variables(node.right)


def _source(node) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return f"{node.kind}[{node.index}]"
    if isinstance(node, Neg):
        return f"(-{_source(node.arg)})"
    if isinstance(node, BinOp):
        return f"({_source(node.left)} {node.op} {_source(node.right)})"
    if isinstance(node, Pow):
        return f"({_source(node.base)} ** {node.exp})"
    return f"_{node.func}({_source(node.arg)})"


def compile_many(nodes: Sequence[Expr]) -> Callable[[Sequence[float], Sequence[float]], list]:
    """Compile expressions into one fast function ``(x, u) -> list[float]``.

    Semantics match :func:`evaluate`, including DomainError on division by
    zero, sqrt of negatives and overflow.
    """
    body = ", ".join(_source(n) for n in nodes)
    namespace = {f"_{k}": v for k, v in _FUNC_IMPL.items()}
    code = f"def _f(x, u):\n    return [{body}]\n"
    exec(compile(code, "<compstab-expr>", "exec"), namespace)
    raw = namespace["_f"]

    def fn(x, u=()):
        try:
            return raw(x, u)
        except ZeroDivisionError as exc:
            raise DomainError("division by zero") from exc
        except (OverflowError, ValueError) as exc:
            raise DomainError(str(exc)) from exc

    return fn


# ---------------------------------------------------------- differentiation

ZERO = Num(0.0)
ONE = Num(1.0)


def _num(v):
    return Num(float(v))


def _add(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return _num(a.value + b.value)
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    if isinstance(b, Neg):
        return _sub(a, b.arg)
    return Add(a, b)


def _sub(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return _num(a.value - b.value)
    if b == ZERO:
        return a
    if a == ZERO:
        return _neg(b)
    return Sub(a, b)


def _neg(a):
    if isinstance(a, Num):
        return _num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return _num(a.value * b.value)
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    if isinstance(a, Num) and a.value == -1.0:
        return _neg(b)
    if isinstance(b, Num) and b.value == -1.0:
        return _neg(a)
    return Mul(a, b)


def _div(a, b):
    if b == ONE:
        return a
    if a == ZERO:
        return ZERO
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return _num(a.value / b.value)
    return Div(a, b)


def _pow(a, k):
    if k == 0:
        return ONE
    if k == 1:
        return a
    if isinstance(a, Num):
        return _num(a.value ** k)
    return Pow(a, k)


def differentiate(node: Expr, var: str) -> Expr:
    """Exact partial derivative of ``node`` with respect to variable ``var``.

    The result is lightly simplified (constant folding, 0/1 identities).
    Derivatives of ``cbrt``, ``sqrt`` and ``abs`` contain divisions that
    raise DomainError when evaluated where the argument is zero.
    """
    if isinstance(node, Num):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.name == var else ZERO
    if isinstance(node, Neg):
        return _neg(differentiate(node.arg, var))
    if isinstance(node, BinOp):
        a, b = node.left, node.right
        da, db = differentiate(a, var), differentiate(b, var)
        if node.op == "+":
            return _add(da, db)
        if node.op == "-":
            return _sub(da, db)
        if node.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        # quotient rule
        return _div(_sub(_mul(da, b), _mul(a, db)), _pow(b, 2))
    if isinstance(node, Pow):
        k = node.exp
        if k == 0:
            return ZERO
        return _mul(_mul(_num(k), _pow(node.base, k - 1)), differentiate(node.base, var))
    if isinstance(node, Call):
        a = node.arg
        da = differentiate(a, var)
        if da == ZERO:
            return ZERO
        f = node.func
        if f == "cbrt":
            outer = _div(ONE, _mul(_num(3), _pow(Call("cbrt", a), 2)))
        elif f == "sqrt":
            outer = _div(ONE, _mul(_num(2), Call("sqrt", a)))
        elif f == "sin":
            outer = Call("cos", a)
        elif f == "cos":
            outer = _neg(Call("sin", a))
        elif f == "exp":
            outer = Call("exp", a)
        elif f == "abs":
            outer = _div(a, Call("abs", a))
        else:
            raise ValueError(f"unknown function {f}")
        return _mul(outer, da)
    raise TypeError(f"not an expression node: {node!r}")
