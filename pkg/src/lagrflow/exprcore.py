"""Scalar expressions: parsing, printing, symbolic differentiation and
vectorized evaluation.

Expressions are immutable trees. Evaluation accepts floats or numpy arrays
for the variables and raises :class:`ExprDomainError` instead of returning
nan or inf.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

VARIABLES = frozenset({"t", "z1", "z2", "z3", "s"})
FUNCTIONS = {
    "sin": 1, "cos": 1, "tan": 1, "sinh": 1, "cosh": 1, "tanh": 1,
    "exp": 1, "log": 1, "sqrt": 1, "cbrt": 1, "atan2": 2,
}
CONSTANTS = {"pi": math.pi}


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier '{name}' at byte offset {offset}")
        self.name = name
        self.offset = offset


class ExprDomainError(ExprError, ArithmeticError):
    pass


# ---------------------------------------------------------------- AST nodes

class Expr:
    """Base class of expression nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_text(self)

    def diff(self, var: str) -> "Expr":
        return differentiate(self, var)

    def free_variables(self) -> frozenset:
        return free_variables(self)

    def __call__(self, **bindings):
        return evaluate(self, **bindings)

    # arithmetic sugar for programmatic construction
    def __add__(self, other): return add(self, as_expr(other))
    def __radd__(self, other): return add(as_expr(other), self)
    def __sub__(self, other): return sub(self, as_expr(other))
    def __rsub__(self, other): return sub(as_expr(other), self)
    def __mul__(self, other): return mul(self, as_expr(other))
    def __rmul__(self, other): return mul(as_expr(other), self)
    def __truediv__(self, other): return div(self, as_expr(other))
    def __rtruediv__(self, other): return div(as_expr(other), self)
    def __neg__(self): return neg(self)


@dataclass(frozen=True, eq=True)
class Num(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, eq=True)
class Param(Expr):
    """A named constant bound at parse time (e.g. ``c`` in ``exp(c*t)``)."""
    name: str
    value: float


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True, eq=True)
class Call(Expr):
    func: str
    args: tuple


ZERO = Num(0.0)
ONE = Num(1.0)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return num(float(x))


def num(x: float) -> Expr:
    x = float(x)
    if x < 0 or (x == 0 and math.copysign(1.0, x) < 0):
        return Neg(Num(-x))
    return Num(x)


def _is_num(e: Expr, value: float) -> bool:
    return isinstance(e, Num) and e.value == value


# Smart constructors prune only trivial 0/1 cases to keep derivative trees
# from growing needlessly; they do not attempt general simplification.

def add(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return ZERO
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_num(b, 1.0):
        return a
    if _is_num(a, 0.0):
        return ZERO
    return BinOp("/", a, b)


def neg(a: Expr) -> Expr:
    if _is_num(a, 0.0):
        return ZERO
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return a
    return Pow(a, int(n))


def call(func: str, *args: Expr) -> Expr:
    return Call(func, tuple(args))


# ------------------------------------------------------------------ parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text: str):
    # offsets are byte offsets into the UTF-8 encoding
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}",
                                  len(text[:pos].encode()))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), len(text[:start].encode())))
        pos = m.end()
    tokens.append(("end", "", len(text.encode())))
    return tokens


class _Parser:
    def __init__(self, text, variables, params):
        self.tokens = _tokenize(text)
        self.i = 0
        self.variables = variables
        self.params = params

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, off = self.take()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", off)

    def parse(self):
        e = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {text!r}", off)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        kind, text, off = self.peek()
        if kind == "op" and text in ("^", "**"):
            self.take()
            return Pow(base, self.integer_exponent())
        return base

    def integer_exponent(self):
        kind, text, off = self.peek()
        paren = kind == "op" and text == "("
        if paren:
            self.take()
        sign = 1
        kind, text, off = self.peek()
        if kind == "op" and text in ("-", "+"):
            self.take()
            sign = -1 if text == "-" else 1
        kind, text, off = self.take()
        if kind != "num" or not re.fullmatch(r"\d+", text):
            raise ExprSyntaxError("exponent must be an integer literal", off)
        if paren:
            self.expect(")")
        return sign * int(text)

    def atom(self):
        kind, text, off = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "id":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if text not in FUNCTIONS:
                    raise UnknownIdentifierError(text, off)
                self.take()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[text]:
                    raise ExprSyntaxError(
                        f"{text} takes {FUNCTIONS[text]} argument(s), got {len(args)}", off)
                return Call(text, tuple(args))
            if not re.fullmatch(r"[a-z][a-z0-9_]*", text):
                raise UnknownIdentifierError(text, off)
            if text in self.variables:
                return Var(text)
            if text in self.params:
                return Param(text, float(self.params[text]))
            if text in CONSTANTS:
                return Param(text, CONSTANTS[text])
            raise UnknownIdentifierError(text, off)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {found}", off)


def parse(text: str, params: Mapping[str, float] | None = None,
          variables: Iterable[str] | None = None) -> Expr:
    """Parse ``text`` into an expression tree.

    ``params`` binds extra identifiers to numeric constants. ``variables``
    overrides the default variable set {t, z1, z2, z3, s}.
    """
    variables = VARIABLES if variables is None else frozenset(variables)
    params = dict(params or {})
    clash = set(params) & set(variables)
    if clash:
        raise ExprError(f"parameter names shadow variables: {sorted(clash)}")
    return _Parser(text, variables, params).parse()


# ----------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _fmt_num(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def to_text(e: Expr) -> str:
    return _show(e, 0)


def _show(e: Expr, ctx: int) -> str:
    # ctx: 0 top/additive-left, higher numbers bind tighter
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, (Var, Param)):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({', '.join(_show(a, 0) for a in e.args)})"
    if isinstance(e, Pow):
        base = _show(e.base, 4)
        exp = str(e.exponent) if e.exponent >= 0 else f"({e.exponent})"
        s = f"{base}^{exp}"
        return f"({s})" if ctx >= 4 else s
    if isinstance(e, Neg):
        s = "-" + _show(e.arg, 3)
        return f"({s})" if ctx > 3 else s
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        left = _show(e.left, p)
        # parsing is left-associative, so a right operand of equal
        # precedence keeps its parentheses
        right = _show(e.right, p + 1)
        s = f"{left} {e.op} {right}"
        return f"({s})" if ctx > p else s
    raise TypeError(f"not an expression: {e!r}")


# -------------------------------------------------------------- inspection

def free_variables(e: Expr) -> frozenset:
    if isinstance(e, Var):
        return frozenset({e.name})
    if isinstance(e, (Num, Param)):
        return frozenset()
    if isinstance(e, Neg):
        return free_variables(e.arg)
    if isinstance(e, BinOp):
        return free_variables(e.left) | free_variables(e.right)
    if isinstance(e, Pow):
        return free_variables(e.base)
    if isinstance(e, Call):
        out = frozenset()
        for a in e.args:
            out |= free_variables(a)
        return out
    raise TypeError(e)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, (Num, Param)):
        return e
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, mapping))
    if isinstance(e, BinOp):
        return BinOp(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Pow):
        return Pow(substitute(e.base, mapping), e.exponent)
    if isinstance(e, Call):
        return Call(e.func, tuple(substitute(a, mapping) for a in e.args))
    raise TypeError(e)


# ---------------------------------------------------------- differentiation

def differentiate(e: Expr, var: str) -> Expr:
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, (Num, Param)):
        return ZERO
    if isinstance(e, Neg):
        return neg(differentiate(e.arg, var))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        da, db = differentiate(a, var), differentiate(b, var)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, b), mul(a, db))
        # quotient rule written as da/b - a*db/b^2
        return sub(div(da, b), div(mul(a, db), power(b, 2)))
    if isinstance(e, Pow):
        n = e.exponent
        du = differentiate(e.base, var)
        if _is_num(du, 0.0):
            return ZERO
        return mul(mul(num(n), power(e.base, n - 1)), du)
    if isinstance(e, Call):
        if e.func == "atan2":
            y, x = e.args
            dy, dx = differentiate(y, var), differentiate(x, var)
            numer = sub(mul(x, dy), mul(y, dx))
            if _is_num(numer, 0.0):
                return ZERO
            return div(numer, add(power(x, 2), power(y, 2)))
        u = e.args[0]
        du = differentiate(u, var)
        if _is_num(du, 0.0):
            return ZERO
        return mul(_outer_derivative(e.func, u, e), du)
    raise TypeError(e)


def _outer_derivative(f: str, u: Expr, whole: Expr) -> Expr:
    if f == "sin":
        return call("cos", u)
    if f == "cos":
        return neg(call("sin", u))
    if f == "tan":
        return add(ONE, power(whole, 2))
    if f == "sinh":
        return call("cosh", u)
    if f == "cosh":
        return call("sinh", u)
    if f == "tanh":
        return sub(ONE, power(whole, 2))
    if f == "exp":
        return whole
    if f == "log":
        return div(ONE, u)
    if f == "sqrt":
        return div(ONE, mul(Num(2.0), whole))
    if f == "cbrt":
        return div(ONE, mul(Num(3.0), power(whole, 2)))
    raise ExprError(f"no derivative rule for {f}")


def derivative(e: Expr, *vars: str) -> Expr:
    """Repeated partial derivative, e.g. ``derivative(f, 'z1', 'z1')``."""
    for v in vars:
        e = differentiate(e, v)
    return e


# --------------------------------------------------------------- evaluation

_NUMPY_FUNCS: dict[str, Callable] = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "sinh": np.sinh,
    "cosh": np.cosh, "tanh": np.tanh, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "cbrt": np.cbrt, "atan2": np.arctan2,
}

_BINARY = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide}


def compile_expr(e: Expr) -> Callable[[Mapping], object]:
    """Turn an expression into a closure ``env -> value``.

    The closure does no domain checking; :func:`evaluate` wraps it.
    """
    if isinstance(e, Num):
        v = e.value
        return lambda env: v
    if isinstance(e, Param):
        v = e.value
        return lambda env: v
    if isinstance(e, Var):
        name = e.name

        def var(env):
            try:
                return env[name]
            except KeyError:
                raise ExprError(f"no value bound for variable '{name}'") from None
        return var
    if isinstance(e, Neg):
        f = compile_expr(e.arg)
        return lambda env: -f(env)
    if isinstance(e, BinOp):
        fl, fr, op = compile_expr(e.left), compile_expr(e.right), _BINARY[e.op]
        return lambda env: op(fl(env), fr(env))
    if isinstance(e, Pow):
        fb, n = compile_expr(e.base), e.exponent
        if n >= 0:
            return lambda env: fb(env) ** n
        return lambda env: 1.0 / fb(env) ** (-n)
    if isinstance(e, Call):
        fn = _NUMPY_FUNCS[e.func]
        fa = [compile_expr(a) for a in e.args]
        if len(fa) == 1:
            f0 = fa[0]
            return lambda env: fn(f0(env))
        return lambda env: fn(*(f(env) for f in fa))
    raise TypeError(e)


class Compiled:
    """A compiled expression with domain checking."""

    __slots__ = ("expr", "_fn")

    def __init__(self, expr: Expr):
        self.expr = expr
        self._fn = compile_expr(expr)

    def __call__(self, **env):
        with np.errstate(all="ignore"):
            out = self._fn(env)
        out = np.asarray(out, dtype=float)
        if not np.all(np.isfinite(out)):
            raise ExprDomainError(f"'{self.expr}' is not finite at the given point(s)")
        # broadcast constants to the shape of the inputs
        shapes = [np.shape(v) for v in env.values()]
        if out.ndim == 0 and shapes:
            shape = np.broadcast_shapes(*shapes)
            if shape:
                out = np.broadcast_to(out, shape).copy()
        return out if out.ndim else float(out)


    def raw(self, **env):
        """Evaluate without domain checking (nan/inf may appear)."""
        with np.errstate(all="ignore"):
            return np.asarray(self._fn(env), dtype=float)


def evaluate(e: Expr, **bindings):
    """Evaluate ``e`` with variables bound to floats or arrays."""
    return Compiled(e)(**bindings)


# ---------------------------------------------------------- anti-CR pairs

@dataclass(frozen=True)
class AntiCRPair:
    """Functions (f_a, f_b) of (z1, z2) with f_a,1 + f_b,2 = 0 and
    f_a,2 - f_b,1 = 0, obtained as (Re w, -Im w) of a holomorphic w."""
    f_a: Expr
    f_b: Expr
    descriptor: str


_HOLO_FUNCS = {"exp", "sin", "cos", "sinh", "cosh"}


def _complex_parts(e: Expr, zeta: tuple) -> tuple:
    """Real and imaginary parts of a holomorphic expression in zeta."""
    if isinstance(e, Var):
        # zeta is the complex variable; anything else (z3) is a real parameter
        return zeta if e.name == "zeta" else (e, ZERO)
    if isinstance(e, (Num, Param)):
        return (e, ZERO)
    if isinstance(e, Neg):
        a, b = _complex_parts(e.arg, zeta)
        return (neg(a), neg(b))
    if isinstance(e, BinOp):
        a, b = _complex_parts(e.left, zeta)
        c, d = _complex_parts(e.right, zeta)
        if e.op == "+":
            return (add(a, c), add(b, d))
        if e.op == "-":
            return (sub(a, c), sub(b, d))
        if e.op == "*":
            return (sub(mul(a, c), mul(b, d)), add(mul(a, d), mul(b, c)))
        den = add(power(c, 2), power(d, 2))
        if _is_num(d, 0.0):
            return (div(a, c), div(b, c))
        return (div(add(mul(a, c), mul(b, d)), den), div(sub(mul(b, c), mul(a, d)), den))
    if isinstance(e, Pow):
        n = e.exponent
        base = _complex_parts(e.base, zeta)
        if n < 0:
            inv = _complex_parts(BinOp("/", ONE, Pow(e.base, -n)), zeta)
            return inv
        out = (ONE, ZERO)
        for _ in range(n):
            a, b = out
            c, d = base
            out = (sub(mul(a, c), mul(b, d)), add(mul(a, d), mul(b, c)))
        return out
    if isinstance(e, Call):
        if e.func not in _HOLO_FUNCS:
            raise ExprError(f"'{e.func}' is not in the holomorphic catalog")
        a, b = _complex_parts(e.args[0], zeta)
        ca, sa = call("cos", a), call("sin", a)
        chb, shb = call("cosh", b), call("sinh", b)
        if e.func == "exp":
            ea = call("exp", a)
            return (mul(ea, call("cos", b)), mul(ea, call("sin", b)))
        if e.func == "sin":
            return (mul(call("sin", a), chb), mul(call("cos", a), shb))
        if e.func == "cos":
            return (mul(call("cos", a), chb), neg(mul(call("sin", a), shb)))
        if e.func == "sinh":
            return (mul(call("sinh", a), call("cos", b)), mul(call("cosh", a), call("sin", b)))
        return (mul(call("cosh", a), call("cos", b)), mul(call("sinh", a), call("sin", b)))
    raise TypeError(e)


def anti_cr_pair(descriptor: str, params: Mapping[str, float] | None = None) -> AntiCRPair:
    """Build an anti-CR pair from a holomorphic expression in ``zeta``.

    The descriptor uses the expression grammar with the complex variable
    ``zeta`` = z1 + i*z2, e.g. ``"zeta^2"``, ``"0.3*exp(0.5*zeta) - zeta"``.
    Allowed functions: exp, sin, cos, sinh, cosh; integer powers; real
    coefficients. ``z3`` may appear as a real coefficient.
    """
    try:
        e = parse(descriptor, params=params, variables={"zeta", "z3"})
    except ExprError as err:
        raise ExprError(f"unknown holomorphic catalog entry {descriptor!r}: {err}") from err
    u, v = _complex_parts(e, (Var("z1"), Var("z2")))
    return AntiCRPair(u, neg(v), descriptor)


def anti_cr_residuals(pair_a: Expr, pair_b: Expr, z1, z2, z3=0.0) -> tuple:
    """Pointwise residuals of the two anti-CR identities (z3 is held fixed)."""
    a1, a2 = differentiate(pair_a, "z1"), differentiate(pair_a, "z2")
    b1, b2 = differentiate(pair_b, "z1"), differentiate(pair_b, "z2")
    z1 = np.asarray(z1, float)
    z2 = np.asarray(z2, float)
    z3 = np.broadcast_to(np.asarray(z3, float), np.broadcast_shapes(z1.shape, z2.shape))
    r1 = evaluate(add(a1, b2), z1=z1, z2=z2, z3=z3)
    r2 = evaluate(sub(a2, b1), z1=z1, z2=z2, z3=z3)
    return np.asarray(r1), np.asarray(r2)
