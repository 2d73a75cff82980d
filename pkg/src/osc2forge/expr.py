"""Symbolic scalar expressions over named coordinates.

Expression trees are immutable and hash-consed: structurally equal trees are
the same object, so equality is identity and common subterms are shared
across the thousands of coefficient entries the geometry layers generate.
Construction goes through the smart constructors (``add``, ``mul``, ...),
which fold constants and eliminate trivial zeros/ones on the fly.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

__all__ = [
    "Expr", "Num", "Var", "Neg", "Add", "Sub", "Mul", "Div", "Pow", "Func",
    "ExprError", "ParseError", "EvalError",
    "num", "var", "neg", "add", "sub", "mul", "div", "pow_", "func",
    "ZERO", "ONE", "FUNCTIONS",
    "parse", "differentiate", "evaluate", "simplify", "substitute",
    "free_vars", "to_str", "compile_exprs",
    "CoordSpace", "Point",
]


class ExprError(Exception):
    """Base class for expression-layer failures."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int, expected: Sequence[str] = ()):
        self.position = position
        self.expected = tuple(expected)
        detail = f"{message} at position {position}"
        if self.expected:
            detail += " (expected " + " or ".join(self.expected) + ")"
        super().__init__(detail)


class EvalError(ExprError):
    """Unbound variable or numeric domain failure (NaN/Inf is never returned)."""


# ---------------------------------------------------------------------------
# nodes

_intern: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()


class Expr:
    __slots__ = ("__weakref__",)

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __pow__(self, other):
        return pow_(self, _coerce(other))

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return to_str(self)

    def children(self) -> tuple["Expr", ...]:
        return ()


class Num(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        self.value = value


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name


class Neg(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr):
        self.arg = arg

    def children(self):
        return (self.arg,)


class _Binary(Expr):
    __slots__ = ("left", "right")

    def __init__(self, left: Expr, right: Expr):
        self.left = left
        self.right = right

    def children(self):
        return (self.left, self.right)


class Add(_Binary):
    __slots__ = ()


class Sub(_Binary):
    __slots__ = ()


class Mul(_Binary):
    __slots__ = ()


class Div(_Binary):
    __slots__ = ()


class Pow(_Binary):
    __slots__ = ()


class Func(Expr):
    """Unary function application; ``name`` is one of FUNCTIONS."""

    __slots__ = ("name", "arg")

    def __init__(self, name: str, arg: Expr):
        self.name = name
        self.arg = arg

    def children(self):
        return (self.arg,)


FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt")


def _make(cls, key, *args) -> Expr:
    node = _intern.get(key)
    if node is None:
        node = cls(*args)
        node = _intern.setdefault(key, node)
    return node


# ---------------------------------------------------------------------------
# smart constructors

def num(value: float) -> Num:
    value = float(value)
    if math.isnan(value) or math.isinf(value):
        raise EvalError(f"non-finite literal {value!r}")
    return _make(Num, ("num", value), value)


def var(name: str) -> Var:
    return _make(Var, ("var", name), name)


ZERO = num(0.0)
ONE = num(1.0)


def _coerce(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return num(x)


def _is_num(e: Expr, value: float | None = None) -> bool:
    if not isinstance(e, Num):
        return False
    return value is None or e.value == value


def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return _make(Neg, ("neg", a), a)


def add(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return num(a.value + b.value)
    return _make(Add, ("add", a, b), a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if a is b:
        return ZERO
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return num(a.value - b.value)
    return _make(Sub, ("sub", a, b), a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return ZERO
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return num(a.value * b.value)
    # keep nested constant products shallow; helps derivative trees
    if isinstance(a, Num) and isinstance(b, Mul) and isinstance(b.left, Num):
        return mul(num(a.value * b.left.value), b.right)
    if isinstance(b, Num):
        return mul(b, a)
    return _make(Mul, ("mul", a, b), a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0):
        return ZERO
    if _is_num(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return num(a.value / b.value)
    return _make(Div, ("div", a, b), a, b)


def pow_(a: Expr, b: Expr) -> Expr:
    if _is_num(b, 1.0):
        return a
    if _is_num(b, 0.0):
        return ONE
    if _is_num(a, 1.0):
        return ONE
    if isinstance(a, Num) and isinstance(b, Num):
        try:
            return num(_pow_value(a.value, b.value))
        except EvalError:
            pass  # e.g. (-2)^0.5: keep symbolic, fails at evaluation time
    return _make(Pow, ("pow", a, b), a, b)


def func(name: str, arg: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ExprError(f"unknown function {name!r}")
    if isinstance(arg, Num):
        try:
            return num(_apply_func(name, arg.value))
        except EvalError:
            pass
    return _make(Func, ("func", name, arg), name, arg)


def sin(a):
    return func("sin", _coerce(a))


def cos(a):
    return func("cos", _coerce(a))


def sqrt(a):
    return func("sqrt", _coerce(a))


# ---------------------------------------------------------------------------
# numeric kernels shared by evaluate() and compiled code

def _check(x: float) -> float:
    if math.isnan(x) or math.isinf(x):
        raise EvalError("non-finite intermediate value")
    return x


def _div_value(a: float, b: float) -> float:
    if b == 0.0:
        raise EvalError("division by zero")
    return a / b


def _pow_value(a: float, b: float) -> float:
    if b == int(b) and abs(b) <= 2 ** 31:
        try:
            return float(a) ** int(b)
        except ZeroDivisionError:
            raise EvalError("zero raised to a negative power") from None
        except OverflowError:
            raise EvalError("overflow in power") from None
    if a <= 0.0:
        raise EvalError(f"power with non-positive base {a!r} and fractional exponent")
    return math.exp(b * math.log(a))


def _apply_func(name: str, x: float) -> float:
    try:
        if name == "sin":
            return math.sin(x)
        if name == "cos":
            return math.cos(x)
        if name == "tan":
            return math.tan(x)
        if name == "exp":
            return math.exp(x)
        if name == "log":
            if x <= 0.0:
                raise EvalError(f"log of non-positive value {x!r}")
            return math.log(x)
        if name == "sqrt":
            if x < 0.0:
                raise EvalError(f"sqrt of negative value {x!r}")
            return math.sqrt(x)
    except OverflowError:
        raise EvalError(f"overflow in {name}") from None
    raise ExprError(f"unknown function {name!r}")


# ---------------------------------------------------------------------------
# structure utilities

def _topo_order(roots: Sequence[Expr]) -> list[Expr]:
    """Children-before-parents order over the shared DAG, iteratively."""
    order: list[Expr] = []
    seen: set[int] = set()
    stack: list[tuple[Expr, bool]] = [(r, False) for r in reversed(roots)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in seen:
            continue
        if expanded:
            seen.add(id(node))
            order.append(node)
        else:
            stack.append((node, True))
            for child in node.children():
                if id(child) not in seen:
                    stack.append((child, False))
    return order


def free_vars(e: Expr) -> frozenset[str]:
    names: set[str] = set()
    for node in _topo_order([e]):
        if isinstance(node, Var):
            names.add(node.name)
    return frozenset(names)


def simplify(e: Expr) -> Expr:
    """Rebuild through the smart constructors.

    Covers constant folding, 0/1 unit elimination and x - x -> 0; no
    canonical forms and no trig identities. The result is evaluation
    equivalent to the input at every valid point.
    """
    out: dict[int, Expr] = {}
    for node in _topo_order([e]):
        if isinstance(node, Num):
            out[id(node)] = num(node.value)
        elif isinstance(node, Var):
            out[id(node)] = var(node.name)
        elif isinstance(node, Neg):
            out[id(node)] = neg(out[id(node.arg)])
        elif isinstance(node, Add):
            out[id(node)] = add(out[id(node.left)], out[id(node.right)])
        elif isinstance(node, Sub):
            out[id(node)] = sub(out[id(node.left)], out[id(node.right)])
        elif isinstance(node, Mul):
            out[id(node)] = mul(out[id(node.left)], out[id(node.right)])
        elif isinstance(node, Div):
            out[id(node)] = div(out[id(node.left)], out[id(node.right)])
        elif isinstance(node, Pow):
            out[id(node)] = pow_(out[id(node.left)], out[id(node.right)])
        elif isinstance(node, Func):
            out[id(node)] = func(node.name, out[id(node.arg)])
        else:  # pragma: no cover
            raise ExprError(f"unknown node {node!r}")
    return out[id(e)]


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions, rebuilding through smart constructors."""
    out: dict[int, Expr] = {}
    for node in _topo_order([e]):
        if isinstance(node, Var):
            out[id(node)] = mapping.get(node.name, node)
        elif isinstance(node, Num):
            out[id(node)] = node
        elif isinstance(node, Neg):
            out[id(node)] = neg(out[id(node.arg)])
        elif isinstance(node, Add):
            out[id(node)] = add(out[id(node.left)], out[id(node.right)])
        elif isinstance(node, Sub):
            out[id(node)] = sub(out[id(node.left)], out[id(node.right)])
        elif isinstance(node, Mul):
            out[id(node)] = mul(out[id(node.left)], out[id(node.right)])
        elif isinstance(node, Div):
            out[id(node)] = div(out[id(node.left)], out[id(node.right)])
        elif isinstance(node, Pow):
            out[id(node)] = pow_(out[id(node.left)], out[id(node.right)])
        elif isinstance(node, Func):
            out[id(node)] = func(node.name, out[id(node.arg)])
    return out[id(e)]


# ---------------------------------------------------------------------------
# differentiation

_diff_cache: "weakref.WeakKeyDictionary[Expr, dict[str, Expr]]" = weakref.WeakKeyDictionary()


def _d(e: Expr, name: str) -> Expr:
    per_node = _diff_cache.get(e)
    if per_node is not None:
        hit = per_node.get(name)
        if hit is not None:
            return hit
    result = _d_raw(e, name)
    if per_node is None:
        per_node = {}
        _diff_cache[e] = per_node
    per_node[name] = result
    return result


def _d_raw(e: Expr, name: str) -> Expr:
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == name else ZERO
    if isinstance(e, Neg):
        return neg(_d(e.arg, name))
    if isinstance(e, Add):
        return add(_d(e.left, name), _d(e.right, name))
    if isinstance(e, Sub):
        return sub(_d(e.left, name), _d(e.right, name))
    if isinstance(e, Mul):
        return add(mul(_d(e.left, name), e.right), mul(e.left, _d(e.right, name)))
    if isinstance(e, Div):
        a, b = e.left, e.right
        return div(sub(mul(_d(a, name), b), mul(a, _d(b, name))), pow_(b, num(2.0)))
    if isinstance(e, Pow):
        a, b = e.left, e.right
        if isinstance(b, Num) and b.value == int(b.value):
            # integer exponent: plain power rule keeps the tree small
            return mul(mul(b, pow_(a, num(b.value - 1.0))), _d(a, name))
        # general case differentiated as exp(b*log(a))
        da, db = _d(a, name), _d(b, name)
        return mul(e, add(mul(db, func("log", a)), div(mul(b, da), a)))
    if isinstance(e, Func):
        inner = _d(e.arg, name)
        a = e.arg
        if e.name == "sin":
            outer: Expr = func("cos", a)
        elif e.name == "cos":
            outer = neg(func("sin", a))
        elif e.name == "tan":
            outer = div(ONE, pow_(func("cos", a), num(2.0)))
        elif e.name == "exp":
            outer = e
        elif e.name == "log":
            return div(inner, a)
        elif e.name == "sqrt":
            return div(inner, mul(num(2.0), e))
        else:  # pragma: no cover
            raise ExprError(f"unknown function {e.name!r}")
        return mul(outer, inner)
    raise ExprError(f"cannot differentiate {e!r}")


def differentiate(e: Expr, name: str, order: int = 1) -> Expr:
    """Exact partial derivative of order >= 1 with respect to one variable."""
    if order < 1:
        raise ExprError(f"derivative order must be >= 1, got {order}")
    result = e
    for _ in range(order):
        result = _d(result, name)
    return result


# ---------------------------------------------------------------------------
# evaluation: expressions compile to a flat sequence of register ops so that
# a batch of components sharing subtrees is evaluated once per point

Point = Mapping[str, float]

_OPS = {Neg: "neg", Add: "add", Sub: "sub", Mul: "mul", Div: "div", Pow: "pow"}


def compile_exprs(exprs: Sequence[Expr]) -> Callable[[Point], list[float]]:
    """Compile a batch of expressions into one evaluation function.

    The generated function raises EvalError on unbound variables and on any
    domain failure (division by zero, log/sqrt out of range, non-finite
    result). Shared subtrees are computed once per call.
    """
    order = _topo_order(list(exprs))
    reg: dict[int, str] = {}
    lines = ["def _compiled(_pt):"]
    for k, node in enumerate(order):
        name = f"t{k}"
        reg[id(node)] = name
        if isinstance(node, Num):
            lines.append(f"    {name} = {node.value!r}")
        elif isinstance(node, Var):
            lines.append(f"    {name} = _pt[{node.name!r}]")
        elif isinstance(node, Neg):
            lines.append(f"    {name} = -{reg[id(node.arg)]}")
        elif isinstance(node, Add):
            lines.append(f"    {name} = {reg[id(node.left)]} + {reg[id(node.right)]}")
        elif isinstance(node, Sub):
            lines.append(f"    {name} = {reg[id(node.left)]} - {reg[id(node.right)]}")
        elif isinstance(node, Mul):
            lines.append(f"    {name} = {reg[id(node.left)]} * {reg[id(node.right)]}")
        elif isinstance(node, Div):
            lines.append(f"    {name} = _div({reg[id(node.left)]}, {reg[id(node.right)]})")
        elif isinstance(node, Pow):
            r = node.right
            if isinstance(r, Num) and r.value == int(r.value) and abs(r.value) <= 2 ** 31:
                lines.append(f"    {name} = {reg[id(node.left)]} ** {int(r.value)}")
            else:
                lines.append(f"    {name} = _powf({reg[id(node.left)]}, {reg[id(node.right)]})")
        elif isinstance(node, Func):
            lines.append(f"    {name} = _{node.name}({reg[id(node.arg)]})")
    rets = ", ".join(reg[id(e)] for e in exprs)
    lines.append(f"    return [{rets}]")
    namespace = {
        "_div": _div_value,
        "_powf": _pow_value,
        "_sin": math.sin,
        "_cos": math.cos,
        "_tan": math.tan,
        "_exp": math.exp,
        "_log": math.log,
        "_sqrt": math.sqrt,
    }
    exec("\n".join(lines), namespace)  # noqa: S102 - generated from our own AST
    raw = namespace["_compiled"]
    names = sorted({n.name for n in order if isinstance(n, Var)})

    def run(point: Point) -> list[float]:
        for nm in names:
            if nm not in point:
                raise EvalError(f"unbound variable {nm!r}")
        try:
            out = raw(point)
        except EvalError:
            raise
        except ZeroDivisionError:
            raise EvalError("division by zero") from None
        except OverflowError:
            raise EvalError("overflow") from None
        except ValueError as exc:
            raise EvalError(f"domain error: {exc}") from None
        for v in out:
            if math.isnan(v) or math.isinf(v):
                raise EvalError("non-finite result")
        return out

    return run


_single_cache: "weakref.WeakKeyDictionary[Expr, Callable]" = weakref.WeakKeyDictionary()


def evaluate(e: Expr, point: Point) -> float:
    fn = _single_cache.get(e)
    if fn is None:
        fn = compile_exprs([e])
        _single_cache[e] = fn
    return fn(point)[0]


# ---------------------------------------------------------------------------
# printing (round-trips through parse up to evaluation equivalence)

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _prec(e: Expr) -> int:
    return _PREC.get(type(e), 5)


def to_str(e: Expr) -> str:
    if isinstance(e, Num):
        v = e.value
        if v == int(v) and abs(v) < 1e16:
            text = repr(int(v))
        else:
            text = repr(v)
        return text if v >= 0 else f"({text})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = to_str(e.arg)
        if _prec(e.arg) < _PREC[Neg] or isinstance(e.arg, Neg):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Func):
        return f"{e.name}({to_str(e.arg)})"
    if isinstance(e, (Add, Sub, Mul, Div, Pow)):
        sym = {Add: " + ", Sub: " - ", Mul: "*", Div: "/", Pow: "^"}[type(e)]
        p = _prec(e)
        lhs, rhs = to_str(e.left), to_str(e.right)
        # '-' and '/' do not associate on the right; '^' is right associative
        if _prec(e.left) < p or (isinstance(e, Pow) and _prec(e.left) <= p):
            lhs = f"({lhs})"
        if _prec(e.right) < p or (isinstance(e, (Sub, Div)) and _prec(e.right) <= p):
            rhs = f"({rhs})"
        return f"{lhs}{sym}{rhs}"
    raise ExprError(f"cannot print {e!r}")


# ---------------------------------------------------------------------------
# coordinate spaces

@dataclass(frozen=True)
class CoordSpace:
    """Ordered named coordinates for one chart.

    Base charts use (x1..xn, y1_1..y1_n, y2_1..y2_n); submanifold charts use
    (u1..um, v1_1..v1_m, v2_1..v2_m). The three groups are position, first
    lift (velocity) and second lift (half acceleration).
    """

    role: str
    dim: int
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.dim < 1:
            raise ExprError(f"dimension must be >= 1, got {self.dim}")
        if not self.names:
            prefixes = ("x", "y1_", "y2_") if self.role == "base" else ("u", "v1_", "v2_")
            names = tuple(f"{p}{i}" for p in prefixes for i in range(1, self.dim + 1))
            object.__setattr__(self, "names", names)
        if len(set(self.names)) != len(self.names):
            raise ExprError("coordinate names must be unique")

    @classmethod
    def base(cls, n: int) -> "CoordSpace":
        return cls("base", n)

    @classmethod
    def submanifold(cls, m: int) -> "CoordSpace":
        return cls("submanifold", m)

    def pos(self, i: int) -> Var:
        """i is 1-based, matching index conventions in the formulas."""
        return var(self.names[i - 1])

    def lift1(self, i: int) -> Var:
        return var(self.names[self.dim + i - 1])

    def lift2(self, i: int) -> Var:
        return var(self.names[2 * self.dim + i - 1])

    def group(self, level: int) -> tuple[str, ...]:
        """Names of one coordinate group: 0 position, 1 first lift, 2 second lift."""
        return self.names[level * self.dim:(level + 1) * self.dim]

    def has(self, name: str) -> bool:
        return name in self.names


# ---------------------------------------------------------------------------
# parser
#
#   expr   := term (("+"|"-") term)*
#   term   := factor (("*"|"/") factor)*
#   factor := ("-")? power
#   power  := atom ("^" factor)?
#   atom   := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"

_TOKEN_NUM = "number"
_TOKEN_IDENT = "identifier"


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.tokens: list[tuple[str, str, int]] = []
        self._scan()
        self.index = 0

    def _scan(self):
        text, i, n = self.text, 0, len(self.text)
        while i < n:
            c = text[i]
            if c.isspace():
                i += 1
                continue
            if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
                j = i
                while j < n and text[j].isdigit():
                    j += 1
                if j < n and text[j] == ".":
                    j += 1
                    while j < n and text[j].isdigit():
                        j += 1
                if j < n and text[j] in "eE":
                    k = j + 1
                    if k < n and text[k] in "+-":
                        k += 1
                    if k < n and text[k].isdigit():
                        j = k
                        while j < n and text[j].isdigit():
                            j += 1
                self.tokens.append((_TOKEN_NUM, text[i:j], i))
                i = j
                continue
            if c.isalpha() or c == "_":
                j = i
                while j < n and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                self.tokens.append((_TOKEN_IDENT, text[i:j], i))
                i = j
                continue
            if c in "+-*/^(),":
                self.tokens.append((c, c, i))
                i += 1
                continue
            raise ParseError(f"unexpected character {c!r}", i)
        self.tokens.append(("end", "", n))

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.index]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.index]
        self.index += 1
        return tok


class _Parser:
    def __init__(self, text: str, space: CoordSpace):
        self.toks = _Tokenizer(text)
        self.space = space

    def parse(self) -> Expr:
        e = self._expr()
        kind, _, pos = self.toks.peek()
        if kind != "end":
            raise ParseError("trailing input", pos, ["end of input", "+", "-", "*", "/"])
        return e

    def _expr(self) -> Expr:
        e = self._term()
        while self.toks.peek()[0] in ("+", "-"):
            op = self.toks.advance()[0]
            rhs = self._term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def _term(self) -> Expr:
        e = self._factor()
        while self.toks.peek()[0] in ("*", "/"):
            op = self.toks.advance()[0]
            rhs = self._factor()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def _factor(self) -> Expr:
        if self.toks.peek()[0] == "-":
            self.toks.advance()
            return neg(self._power())
        return self._power()

    def _power(self) -> Expr:
        base = self._atom()
        if self.toks.peek()[0] == "^":
            self.toks.advance()
            # right associative; unary minus on the exponent is allowed
            return pow_(base, self._factor())
        return base

    def _atom(self) -> Expr:
        kind, text, pos = self.toks.advance()
        if kind == _TOKEN_NUM:
            return num(float(text))
        if kind == _TOKEN_IDENT:
            if self.toks.peek()[0] == "(":
                if text not in FUNCTIONS:
                    raise ParseError(f"unknown function {text!r}", pos, FUNCTIONS)
                self.toks.advance()
                arg = self._expr()
                nxt = self.toks.advance()
                if nxt[0] == ",":
                    raise ParseError(f"{text} takes exactly one argument", nxt[2], [")"])
                if nxt[0] != ")":
                    raise ParseError("unterminated call", nxt[2], [")"])
                return func(text, arg)
            if not self.space.has(text):
                raise ParseError(f"unknown identifier {text!r}", pos)
            return var(text)
        if kind == "(":
            e = self._expr()
            nxt = self.toks.advance()
            if nxt[0] != ")":
                raise ParseError("unbalanced parenthesis", nxt[2], [")"])
            return e
        raise ParseError(f"unexpected token {text or kind!r}", pos,
                         [_TOKEN_NUM, _TOKEN_IDENT, "(", "-"])


def parse(text: str, space: CoordSpace) -> Expr:
    """Parse an expression whose identifiers are coordinates of ``space``."""
    return _Parser(text, space).parse()
