"""Small arithmetic expression language for coefficients in config files.

Grammar (by decreasing precedence)::

    atom    := number | t | x | y | func "(" expr ("," expr)* ")" | "(" expr ")"
    power   := atom "^" unary            (right associative)
    unary   := ("-" | "+") unary | power
    product := unary (("*" | "/") unary)*
    sum     := product (("+" | "-") product)*

Functions: abs, sqrt, sin, cos, exp, ln (one argument), pow (two), min and
max (two or more).  Evaluation is vectorised over numpy arrays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np

VARIABLES = ("t", "x", "y")

FUNCTIONS = {
    "abs": (1, 1),
    "sqrt": (1, 1),
    "sin": (1, 1),
    "cos": (1, 1),
    "exp": (1, 1),
    "ln": (1, 1),
    "pow": (2, 2),
    "min": (2, None),
    "max": (2, None),
}

# binding powers
_ADD, _MUL, _UNARY, _POW = 10, 20, 30, 40
_BINARY_BP = {"+": _ADD, "-": _ADD, "*": _MUL, "/": _MUL, "^": _POW}


class ExprError(ValueError):
    """Base class; ``offset`` is a byte offset into the source."""

    def __init__(self, message, offset=None, src=None):
        self.offset = offset
        self.src = src
        where = f" at offset {offset}" if offset is not None else ""
        super().__init__(f"{message}{where}")


class ExprSyntaxError(ExprError):
    pass


class UnknownIdentifierError(ExprSyntaxError):
    pass


class ExprDomainError(ExprError, ArithmeticError):
    """Evaluation left the domain of an operation.

    ``span`` holds character indices of the sub-expression; ``offset`` is in bytes.
    """

    def __init__(self, message, span, src=None):
        self.span = span
        text = f" in '{src[span[0]:span[1]]}'" if src else ""
        offset = len(src[: span[0]].encode("utf-8")) if src else span[0]
        super().__init__(f"{message}{text}", offset, src)


@dataclass(frozen=True)
class Node:
    span: tuple = field(compare=False, repr=False, kw_only=True, default=(0, 0))


@dataclass(frozen=True)
class Num(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    name: str


@dataclass(frozen=True)
class Unary(Node):
    op: str
    operand: Node


@dataclass(frozen=True)
class Binary(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    func: str
    args: tuple


@dataclass(frozen=True)
class Expr:
    """A parsed expression together with its source text."""

    root: Node
    src: str = field(compare=False)

    def __call__(self, t=0.0, x=0.0, y=0.0):
        return evaluate(self, t, x, y)

    def __str__(self):
        return pretty(self.root)

    @property
    def variables(self) -> set:
        found = set()
        _collect_vars(self.root, found)
        return found


_TOKEN = re.compile(
    r"""\s*(?:
        (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
      | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
      | (?P<op>[-+*/^(),])
    )""",
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str  # num | name | op | end
    text: str
    start: int  # character index
    end: int


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = self._lex(src)
        self.i = 0

    def _byte(self, char_index):
        return len(self.src[:char_index].encode("utf-8"))

    def error(self, message, char_index, cls=ExprSyntaxError):
        return cls(message, self._byte(char_index), self.src)

    def _lex(self, src):
        toks = []
        pos = 0
        n = len(src)
        while True:
            while pos < n and src[pos].isspace():
                pos += 1
            if pos >= n:
                break
            m = _TOKEN.match(src, pos)
            if m is None or m.end() == pos:
                raise self.error(f"unexpected character {src[pos]!r}", pos)
            kind = m.lastgroup
            toks.append(_Tok(kind, m.group(kind), m.start(kind), m.end()))
            pos = m.end()
        toks.append(_Tok("end", "", n, n))
        return toks

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text):
        t = self.tok
        if t.kind == "op" and t.text == text:
            return self.advance()
        got = "end of input" if t.kind == "end" else repr(t.text)
        raise self.error(f"expected '{text}', got {got}", t.start)

    def lbp(self, t):
        if t.kind == "op":
            return _BINARY_BP.get(t.text, 0)
        return 0

    def expression(self, rbp=0) -> Node:
        left = self.nud(self.advance())
        while rbp < self.lbp(self.tok):
            left = self.led(self.advance(), left)
        return left

    def nud(self, t: _Tok) -> Node:
        if t.kind == "num":
            return Num(float(t.text), span=(t.start, t.end))
        if t.kind == "name":
            if t.text in FUNCTIONS:
                return self.call(t)
            if t.text in VARIABLES:
                return Var(t.text, span=(t.start, t.end))
            raise self.error(f"unknown identifier '{t.text}'", t.start, UnknownIdentifierError)
        if t.kind == "op" and t.text in "+-":
            operand = self.expression(_UNARY)
            return Unary(t.text, operand, span=(t.start, operand.span[1]))
        if t.kind == "op" and t.text == "(":
            inner = self.expression()
            close = self.expect(")")
            # widen the span so domain errors quote the parentheses too
            return replace(inner, span=(t.start, close.end))
        got = "end of input" if t.kind == "end" else repr(t.text)
        raise self.error(f"expected a number, variable, function or '(', got {got}", t.start)

    def led(self, t: _Tok, left: Node) -> Node:
        bp = _BINARY_BP[t.text]
        right = self.expression(bp - 1 if t.text == "^" else bp)
        return Binary(t.text, left, right, span=(left.span[0], right.span[1]))

    def call(self, name: _Tok) -> Node:
        self.expect("(")
        args = [self.expression()]
        while self.tok.kind == "op" and self.tok.text == ",":
            self.advance()
            args.append(self.expression())
        close = self.expect(")")
        lo, hi = FUNCTIONS[name.text]
        if len(args) < lo or (hi is not None and len(args) > hi):
            want = str(lo) if lo == hi else f"at least {lo}"
            raise self.error(f"{name.text}() takes {want} argument(s), got {len(args)}", name.start)
        return Call(name.text, tuple(args), span=(name.start, close.end))


def parse(src: str) -> Expr:
    """Parse ``src`` into an :class:`Expr`; raises :class:`ExprSyntaxError`."""
    p = _Parser(src)
    root = p.expression()
    if p.tok.kind != "end":
        raise p.error(f"expected operator or end of input, got {p.tok.text!r}", p.tok.start)
    return Expr(root, src)


def _collect_vars(node, out):
    if isinstance(node, Var):
        out.add(node.name)
    elif isinstance(node, Unary):
        _collect_vars(node.operand, out)
    elif isinstance(node, Binary):
        _collect_vars(node.left, out)
        _collect_vars(node.right, out)
    elif isinstance(node, Call):
        for a in node.args:
            _collect_vars(a, out)


def _prec(node):
    if isinstance(node, Binary):
        return _BINARY_BP[node.op]
    if isinstance(node, Unary):
        return _UNARY
    return 100


def pretty(node: Node) -> str:
    """Render with the minimum parentheses that preserve the tree."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({', '.join(pretty(a) for a in node.args)})"
    if isinstance(node, Unary):
        inner = pretty(node.operand)
        if _prec(node.operand) < _UNARY:
            inner = f"({inner})"
        return f"{node.op}{inner}"
    p = _BINARY_BP[node.op]
    left, right = pretty(node.left), pretty(node.right)
    if node.op == "^":
        wrap_left = _prec(node.left) <= p
        wrap_right = _prec(node.right) < p
    else:
        wrap_left = _prec(node.left) < p
        wrap_right = _prec(node.right) <= p
    if wrap_left:
        left = f"({left})"
    if wrap_right:
        right = f"({right})"
    return f"{left} {node.op} {right}" if p == _ADD else f"{left}{node.op}{right}"


def _power(base, exp, node, src):
    base = np.asarray(base, dtype=float)
    exp = np.asarray(exp, dtype=float)
    bad = ((base < 0) & (exp != np.floor(exp))) | ((base == 0) & (exp < 0))
    if np.any(bad):
        raise ExprDomainError("power outside its domain", node.span, src)
    with np.errstate(all="ignore"):
        out = np.power(base, exp)
    return out


def _eval(node, env, src):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Unary):
        v = _eval(node.operand, env, src)
        return -v if node.op == "-" else v
    if isinstance(node, Binary):
        a = _eval(node.left, env, src)
        b = _eval(node.right, env, src)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            if np.any(np.asarray(b) == 0):
                raise ExprDomainError("division by zero", node.span, src)
            return a / b
        return _power(a, b, node, src)
    args = [_eval(a, env, src) for a in node.args]
    f = node.func
    if f == "abs":
        return np.abs(args[0])
    if f == "pow":
        return _power(args[0], args[1], node, src)
    if f == "min":
        return _reduce(np.minimum, args)
    if f == "max":
        return _reduce(np.maximum, args)
    a = np.asarray(args[0], dtype=float)
    if f == "sqrt":
        if np.any(a < 0):
            raise ExprDomainError("sqrt of a negative number", node.span, src)
        return np.sqrt(a)
    if f == "ln":
        if np.any(a <= 0):
            raise ExprDomainError("ln of a non-positive number", node.span, src)
        return np.log(a)
    with np.errstate(over="ignore"):
        return {"sin": np.sin, "cos": np.cos, "exp": np.exp}[f](a)


def _reduce(fn, args):
    out = args[0]
    for a in args[1:]:
        out = fn(out, a)
    return out


def evaluate(e: Expr, t=0.0, x=0.0, y=0.0):
    """Evaluate ``e``; scalars in give a float out, arrays broadcast."""
    out = _eval(e.root, {"t": t, "x": x, "y": y}, e.src)
    if not np.all(np.isfinite(out)):
        raise ExprDomainError("result is not finite", e.root.span, e.src)
    if np.ndim(out) == 0:
        return float(out)
    shape = np.broadcast_shapes(np.shape(t), np.shape(x), np.shape(y))
    return np.broadcast_to(out, shape).astype(float, copy=False)
