"""Small exact-arithmetic expression kernel for the jet space of a delayed
second-order equation.

Expressions are built from rational constants, parameters (c1, c2, ..., and
the reserved delay symbol r), the seven jet coordinates
t, x, x(t-r), x', x'(t-r), x'', x''(t-r), named coefficient functions of t or
t-r with up to three primes, integer powers, and the elementary functions
sin, cos, exp, ln, sqrt.

The kernel provides a canonical normal form (expanded sums of ordered
monomials with exact rational coefficients), partial differentiation, the
delay shift t -> t-r, simultaneous substitution, coefficient collection by
jet monomials, and IEEE-double evaluation.  No trigonometric or exponential
identities are applied beyond literal constant folding; callers that need
such identities use numeric sampling instead.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction


class ExprError(Exception):
    """Malformed expression or unsupported operation."""


class ParseError(ExprError):
    def __init__(self, message, pos):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class EvalError(ExprError):
    """Unbound symbol or numeric domain violation during evaluation."""


_JET_TAGS = ("t", "x", "xr", "x1", "x1r", "x2", "x2r")
_JET_INDEX = {tag: i for i, tag in enumerate(_JET_TAGS)}
_FN_NAMES = ("sin", "cos", "exp", "ln", "sqrt")
_FN_INDEX = {name: i for i, name in enumerate(_FN_NAMES)}
_MAX_COEFF_ORDER = 3


def _as_expr(v):
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, Fraction)):
        return Rat(Fraction(v))
    raise ExprError(f"cannot coerce {v!r} to an expression")


class Expr:
    """Immutable expression node.  Arithmetic operators build raw trees;
    call normalize() for the canonical form."""

    __slots__ = ()

    def __add__(self, other):
        return Sum((self, _as_expr(other)))

    def __radd__(self, other):
        return Sum((_as_expr(other), self))

    def __sub__(self, other):
        return Sum((self, Prod((Rat(Fraction(-1)), _as_expr(other)))))

    def __rsub__(self, other):
        return Sum((_as_expr(other), Prod((Rat(Fraction(-1)), self))))

    def __mul__(self, other):
        return Prod((self, _as_expr(other)))

    def __rmul__(self, other):
        return Prod((_as_expr(other), self))

    def __truediv__(self, other):
        other = _as_expr(other)
        if isinstance(other, Rat):
            if other.q == 0:
                raise ExprError("division by zero")
            return Prod((Rat(1 / other.q), self))
        return Prod((self, Pow(other, -1)))

    def __rtruediv__(self, other):
        return Prod((_as_expr(other), Pow(self, -1)))

    def __pow__(self, n):
        if not isinstance(n, int):
            raise ExprError("only integer exponents are supported")
        return Pow(self, n)

    def __neg__(self):
        return Prod((Rat(Fraction(-1)), self))

    def __repr__(self):
        return render(self)


@dataclass(frozen=True, repr=False)
class Rat(Expr):
    """Exact rational constant; floats never enter expressions."""

    q: Fraction

    def __post_init__(self):
        if not isinstance(self.q, Fraction):
            object.__setattr__(self, "q", Fraction(self.q))


@dataclass(frozen=True, repr=False)
class Par(Expr):
    """Named parameter (c1..c99, the delay r, ...), optionally bound to an
    exact rational that normalize() substitutes."""

    name: str
    value: Fraction | None = None


@dataclass(frozen=True, repr=False)
class Jet(Expr):
    """One of the seven jet coordinates; delayed values are independent
    symbols from their undelayed counterparts."""

    tag: str

    def __post_init__(self):
        if self.tag not in _JET_INDEX:
            raise ExprError(f"unknown jet tag {self.tag!r}")


@dataclass(frozen=True, repr=False)
class Coeff(Expr):
    """Named coefficient function of t (or of t-r when delayed), carrying a
    derivative order 0..3."""

    name: str
    delayed: bool = False
    order: int = 0

    def __post_init__(self):
        if not (0 <= self.order <= _MAX_COEFF_ORDER):
            raise ExprError(
                f"derivative order {self.order} of {self.name} exceeds "
                f"{_MAX_COEFF_ORDER}"
            )


@dataclass(frozen=True, repr=False)
class Sum(Expr):
    terms: tuple

    def __post_init__(self):
        if not isinstance(self.terms, tuple):
            object.__setattr__(self, "terms", tuple(self.terms))


@dataclass(frozen=True, repr=False)
class Prod(Expr):
    factors: tuple

    def __post_init__(self):
        if not isinstance(self.factors, tuple):
            object.__setattr__(self, "factors", tuple(self.factors))


@dataclass(frozen=True, repr=False)
class Pow(Expr):
    """Integer power.  Negative exponents are allowed; the polynomial layer
    keeps multi-term bases with negative exponents opaque."""

    base: Expr
    n: int

    def __post_init__(self):
        if not isinstance(self.n, int):
            raise ExprError("exponent must be an integer")


@dataclass(frozen=True, repr=False)
class App(Expr):
    """Application of an elementary function."""

    fn: str
    arg: Expr

    def __post_init__(self):
        if self.fn not in _FN_INDEX:
            raise ExprError(f"unknown function {self.fn!r}")


T = Jet("t")
X = Jet("x")
XR = Jet("xr")
X1 = Jet("x1")
X1R = Jet("x1r")
X2 = Jet("x2")
X2R = Jet("x2r")
R = Par("r")

ZERO = Rat(Fraction(0))
ONE = Rat(Fraction(1))


def num(v) -> Rat:
    """Exact rational literal."""
    return Rat(Fraction(v))


def par(name, value=None) -> Par:
    return Par(name, None if value is None else Fraction(value))


def fn(name, delayed=False, order=0) -> Coeff:
    return Coeff(name, delayed, order)


def app(name, arg) -> App:
    return App(name, _as_expr(arg))


# ---------------------------------------------------------------------------
# canonical ordering


def _natkey(name):
    m = re.fullmatch(r"([A-Za-z_]*)(\d*)", name)
    if m is None:
        return (name, -1)
    alpha, digits = m.groups()
    return (alpha, int(digits) if digits else -1)


def _skey(e):
    """Total structural order on canonical expressions.  Atom ranks follow
    Parameter < Coeff < Jet < App; composite bases sort last."""
    if isinstance(e, Rat):
        return (0, e.q.numerator, e.q.denominator)
    if isinstance(e, Par):
        return (1,) + _natkey(e.name)
    if isinstance(e, Coeff):
        return (2,) + _natkey(e.name) + (int(e.delayed), e.order)
    if isinstance(e, Jet):
        return (3, _JET_INDEX[e.tag])
    if isinstance(e, App):
        return (4, _FN_INDEX[e.fn], _skey(e.arg))
    if isinstance(e, Pow):
        return (5, _skey(e.base), e.n)
    if isinstance(e, Prod):
        return (6,) + tuple(_skey(f) for f in e.factors)
    if isinstance(e, Sum):
        return (7,) + tuple(_skey(t) for t in e.terms)
    raise ExprError(f"unexpected node {e!r}")


# ---------------------------------------------------------------------------
# normal form

# A polynomial is a dict {monomial: Fraction} where a monomial is a tuple of
# (atom, exponent) pairs sorted by _skey, atoms being Par/Coeff/Jet/App nodes
# or whole canonical Sums serving as opaque bases of negative powers.


def _mono_mul(m1, m2):
    if not m1:
        return m2
    if not m2:
        return m1
    acc = dict(m1)
    for a, n in m2:
        acc[a] = acc.get(a, 0) + n
    return tuple(sorted(((a, n) for a, n in acc.items() if n != 0),
                        key=lambda p: (_skey(p[0]), p[1])))


def _poly_add(p1, p2):
    out = dict(p1)
    for m, c in p2.items():
        s = out.get(m, Fraction(0)) + c
        if s == 0:
            out.pop(m, None)
        else:
            out[m] = s
    return out


def _poly_mul(p1, p2):
    out = {}
    for m1, c1 in p1.items():
        for m2, c2 in p2.items():
            m = _mono_mul(m1, m2)
            c = c1 * c2
            s = out.get(m, Fraction(0)) + c
            if s == 0:
                out.pop(m, None)
            else:
                out[m] = s
    return out


def _poly_pow(p, n):
    result = {(): Fraction(1)}
    base = p
    k = n
    while k > 0:
        if k & 1:
            result = _poly_mul(result, base)
        k >>= 1
        if k:
            base = _poly_mul(base, base)
    return result


def _atom_poly(a):
    return {((a, 1),): Fraction(1)}


def _fold_app(name, arg):
    """Literal constant folding only; no identities between functions."""
    if isinstance(arg, Rat):
        q = arg.q
        if name == "sin" and q == 0:
            return ZERO
        if name == "cos" and q == 0:
            return ONE
        if name == "exp" and q == 0:
            return ONE
        if name == "ln":
            if q == 1:
                return ZERO
            if q <= 0:
                raise ExprError(f"ln of non-positive constant {q}")
        if name == "sqrt":
            if q < 0:
                raise ExprError(f"sqrt of negative constant {q}")
            if q == 0:
                return ZERO
            rn = math.isqrt(q.numerator)
            rd = math.isqrt(q.denominator)
            if rn * rn == q.numerator and rd * rd == q.denominator:
                return Rat(Fraction(rn, rd))
    return App(name, arg)


def _poly(e):
    if isinstance(e, Rat):
        return {} if e.q == 0 else {(): e.q}
    if isinstance(e, Par):
        if e.value is not None:
            return {} if e.value == 0 else {(): e.value}
        return _atom_poly(e)
    if isinstance(e, (Jet, Coeff)):
        return _atom_poly(e)
    if isinstance(e, App):
        folded = _fold_app(e.fn, normalize(e.arg))
        if isinstance(folded, Rat):
            return _poly(folded)
        return _atom_poly(folded)
    if isinstance(e, Sum):
        out = {}
        for t in e.terms:
            out = _poly_add(out, _poly(t))
        return out
    if isinstance(e, Prod):
        out = {(): Fraction(1)}
        for f in e.factors:
            out = _poly_mul(out, _poly(f))
        return out
    if isinstance(e, Pow):
        if e.n == 0:
            return {(): Fraction(1)}
        p = _poly(e.base)
        if e.n > 0:
            return _poly_pow(p, e.n)
        if not p:
            raise ExprError("negative power of zero")
        if len(p) == 1:
            ((mono, coeff),) = p.items()
            # scaling exponents by a constant keeps the atom order
            return {tuple((a, k * e.n) for a, k in mono): coeff ** e.n}
        return {((_rebuild(p), e.n),): Fraction(1)}
    raise ExprError(f"unexpected node {e!r}")


def _term_expr(mono, coeff):
    factors = [a if n == 1 else Pow(a, n) for a, n in mono]
    if not factors:
        return Rat(coeff)
    if coeff != 1:
        factors = [Rat(coeff)] + factors
    if len(factors) == 1:
        return factors[0]
    return Prod(tuple(factors))


def _rebuild(p):
    if not p:
        return ZERO
    monos = sorted(p.keys(),
                   key=lambda m: tuple((_skey(a), n) for a, n in m))
    terms = [_term_expr(m, p[m]) for m in monos]
    if len(terms) == 1:
        return terms[0]
    return Sum(tuple(terms))


def normalize(e) -> Expr:
    """Canonical normal form: idempotent, semantics-preserving; two
    expressions of the supported class are semantically equal iff their
    normal forms are structurally identical."""
    return _rebuild(_poly(_as_expr(e)))


def equivalent(e1, e2) -> bool:
    return normalize(e1) == normalize(e2)


# ---------------------------------------------------------------------------
# differentiation


def _diff_raw(e, tag, slot):
    """slot: 'all' for d/dt including delayed coefficients (chain rule with
    d(t-r)/dt = 1), 't' / 'tr' for the explicit partials used by the
    prolonged operator."""
    if isinstance(e, (Rat, Par)):
        return ZERO
    if isinstance(e, Jet):
        if tag == "t" and slot == "tr":
            return ZERO
        return ONE if e.tag == tag else ZERO
    if isinstance(e, Coeff):
        if tag != "t":
            return ZERO
        if slot == "t" and e.delayed:
            return ZERO
        if slot == "tr" and not e.delayed:
            return ZERO
        if e.order >= _MAX_COEFF_ORDER:
            raise ExprError(
                f"differentiating {e.name} beyond order {_MAX_COEFF_ORDER}"
            )
        return Coeff(e.name, e.delayed, e.order + 1)
    if isinstance(e, Sum):
        return Sum(tuple(_diff_raw(t, tag, slot) for t in e.terms))
    if isinstance(e, Prod):
        terms = []
        for i, f in enumerate(e.factors):
            df = _diff_raw(f, tag, slot)
            terms.append(Prod(e.factors[:i] + (df,) + e.factors[i + 1:]))
        return Sum(tuple(terms))
    if isinstance(e, Pow):
        db = _diff_raw(e.base, tag, slot)
        return Prod((Rat(Fraction(e.n)), Pow(e.base, e.n - 1), db))
    if isinstance(e, App):
        da = _diff_raw(e.arg, tag, slot)
        if e.fn == "sin":
            outer = App("cos", e.arg)
        elif e.fn == "cos":
            outer = Prod((Rat(Fraction(-1)), App("sin", e.arg)))
        elif e.fn == "exp":
            outer = App("exp", e.arg)
        elif e.fn == "ln":
            outer = Pow(e.arg, -1)
        else:  # sqrt
            outer = Prod((Rat(Fraction(1, 2)), Pow(App("sqrt", e.arg), -1)))
        return Prod((outer, da))
    raise ExprError(f"unexpected node {e!r}")


def diff(e, v) -> Expr:
    """Partial derivative with respect to a jet coordinate, normalized.
    Jet coordinates are mutually independent; differentiating by t raises
    the order of coefficient functions of both t and t-r."""
    if not isinstance(v, Jet):
        raise ExprError("differentiation variable must be a jet coordinate")
    return normalize(_diff_raw(_as_expr(e), v.tag, "all"))


def diff_explicit(e, slot) -> Expr:
    """Partial derivative with respect to the explicit t (slot 't') or the
    explicit delayed time (slot 'tr').  Bare t inside elementary-function
    arguments is attributed to the t slot; delayed time dependence must
    enter through coefficient functions of t-r."""
    if slot not in ("t", "tr"):
        raise ExprError("slot must be 't' or 'tr'")
    return normalize(_diff_raw(_as_expr(e), "t", slot))


# ---------------------------------------------------------------------------
# delay shift and substitution


def _contains_delayed(e):
    if isinstance(e, Jet):
        return e.tag in ("xr", "x1r", "x2r")
    if isinstance(e, Coeff):
        return e.delayed
    if isinstance(e, Par):
        return e.name == "r"
    if isinstance(e, Sum):
        return any(_contains_delayed(t) for t in e.terms)
    if isinstance(e, Prod):
        return any(_contains_delayed(f) for f in e.factors)
    if isinstance(e, Pow):
        return _contains_delayed(e.base)
    if isinstance(e, App):
        return _contains_delayed(e.arg)
    return False


_SHIFT_JET = {"x": XR, "x1": X1R, "x2": X2R}


def shift(e) -> Expr:
    """Delay shift: t -> t-r, x -> x(t-r), x' -> x'(t-r), x'' -> x''(t-r),
    f(t) -> f(t-r).  Double delays are out of model."""
    e = _as_expr(e)
    if _contains_delayed(e):
        raise ExprError("expression already contains delayed symbols; "
                        "double shift is out of model")
    return normalize(_shift_raw(e))


def _shift_raw(e):
    if isinstance(e, (Rat, Par)):
        return e
    if isinstance(e, Jet):
        if e.tag == "t":
            return Sum((T, Prod((Rat(Fraction(-1)), R))))
        return _SHIFT_JET[e.tag]
    if isinstance(e, Coeff):
        return Coeff(e.name, True, e.order)
    if isinstance(e, Sum):
        return Sum(tuple(_shift_raw(t) for t in e.terms))
    if isinstance(e, Prod):
        return Prod(tuple(_shift_raw(f) for f in e.factors))
    if isinstance(e, Pow):
        return Pow(_shift_raw(e.base), e.n)
    if isinstance(e, App):
        return App(e.fn, _shift_raw(e.arg))
    raise ExprError(f"unexpected node {e!r}")


def substitute(e, bindings) -> Expr:
    """Simultaneous substitution followed by normalize.

    Keys may be jet coordinates, parameters, or coefficient functions.  A
    key f(t) with no primes acts functionally: f'(t), f(t-r), f''(t-r), ...
    are rewritten to the correspondingly differentiated and shifted
    replacement (which must be delay-free).  Keys with primes or a delayed
    argument match that exact atom only.
    """
    jet_map = {}
    par_map = {}
    fn_rules = {}
    atom_map = {}
    for k, v in bindings.items():
        v = _as_expr(v)
        if isinstance(k, Jet):
            jet_map[k.tag] = v
        elif isinstance(k, Par):
            par_map[k.name] = v
        elif isinstance(k, Coeff):
            if not k.delayed and k.order == 0:
                if _contains_delayed(v):
                    raise ExprError(
                        f"functional replacement for {k.name} must be "
                        "delay-free"
                    )
                fn_rules[k.name] = v
            else:
                atom_map[k] = v
        else:
            raise ExprError(f"unsupported substitution key {k!r}")

    def repl(node):
        if isinstance(node, Jet):
            return jet_map.get(node.tag, node)
        if isinstance(node, Par):
            return par_map.get(node.name, node)
        if isinstance(node, Coeff):
            if node in atom_map:
                return atom_map[node]
            if node.name in fn_rules:
                out = fn_rules[node.name]
                for _ in range(node.order):
                    out = _diff_raw(out, "t", "all")
                if node.delayed:
                    out = _shift_raw(normalize(out))
                return out
            return node
        if isinstance(node, Sum):
            return Sum(tuple(repl(t) for t in node.terms))
        if isinstance(node, Prod):
            return Prod(tuple(repl(f) for f in node.factors))
        if isinstance(node, Pow):
            return Pow(repl(node.base), node.n)
        if isinstance(node, App):
            return App(node.fn, repl(node.arg))
        return node

    return normalize(repl(_as_expr(e)))


# ---------------------------------------------------------------------------
# collection


def _mentions_jet(e, tags):
    if isinstance(e, Jet):
        return e.tag in tags
    if isinstance(e, Sum):
        return any(_mentions_jet(t, tags) for t in e.terms)
    if isinstance(e, Prod):
        return any(_mentions_jet(f, tags) for f in e.factors)
    if isinstance(e, Pow):
        return _mentions_jet(e.base, tags)
    if isinstance(e, App):
        return _mentions_jet(e.arg, tags)
    return False


def collect(e, jets) -> dict:
    """Coefficients of the monomials in the given jet coordinates.

    Returns {monomial expression: coefficient expression}; the constant
    monomial 1 is always present.  Raises on non-polynomial dependence
    (negative powers or occurrence inside function arguments).
    """
    tags = {j.tag for j in jets}
    groups = {}
    for mono, coeff in _poly(_as_expr(e)).items():
        var_part = []
        rest = []
        for a, n in mono:
            if isinstance(a, Jet) and a.tag in tags:
                if n < 0:
                    raise ExprError(
                        f"non-polynomial dependence on {a.tag}: power {n}"
                    )
                var_part.append((a, n))
            else:
                if _mentions_jet(a, tags):
                    raise ExprError(
                        "non-polynomial dependence: collected variable "
                        f"occurs inside {render(a)}"
                    )
                rest.append((a, n))
        key = tuple(var_part)
        groups.setdefault(key, {})
        rest_t = tuple(rest)
        groups[key][rest_t] = groups[key].get(rest_t, Fraction(0)) + coeff
    out = {}
    for key, p in groups.items():
        p = {m: c for m, c in p.items() if c != 0}
        out[_term_expr(key, Fraction(1)) if key else ONE] = _rebuild(p)
    out.setdefault(ONE, ZERO)
    return out


# ---------------------------------------------------------------------------
# numeric evaluation


def _coeff_value(fn_table, name, order, tval):
    if fn_table is None or name not in fn_table:
        raise EvalError(f"no numeric binding for coefficient function {name}")
    entry = fn_table[name]
    if callable(entry):
        if order > 0:
            raise EvalError(
                f"derivative of order {order} of {name} not supplied"
            )
        return float(entry(tval))
    try:
        f = entry[order]
    except (IndexError, KeyError, TypeError):
        raise EvalError(
            f"derivative of order {order} of {name} not supplied"
        ) from None
    return float(f(tval))


def eval_numeric(e, env, fn_table=None) -> float:
    """Evaluate at a point.  env maps symbol names ('t', 'x', 'x1r', 'c1',
    'r', ...) to floats; fn_table maps coefficient-function names to either
    a callable (order 0) or a sequence of callables indexed by derivative
    order."""
    e = _as_expr(e)
    if isinstance(e, Rat):
        return float(e.q)
    if isinstance(e, Par):
        if e.value is not None:
            return float(e.value)
        if e.name not in env:
            raise EvalError(f"unbound parameter {e.name}")
        return float(env[e.name])
    if isinstance(e, Jet):
        if e.tag not in env:
            raise EvalError(f"unbound jet coordinate {e.tag}")
        return float(env[e.tag])
    if isinstance(e, Coeff):
        if "t" not in env:
            raise EvalError("unbound jet coordinate t")
        tval = float(env["t"])
        if e.delayed:
            if "r" not in env:
                raise EvalError("unbound delay r")
            tval -= float(env["r"])
        return _coeff_value(fn_table, e.name, e.order, tval)
    if isinstance(e, Sum):
        return math.fsum(eval_numeric(t, env, fn_table) for t in e.terms)
    if isinstance(e, Prod):
        out = 1.0
        for f in e.factors:
            out *= eval_numeric(f, env, fn_table)
        return out
    if isinstance(e, Pow):
        b = eval_numeric(e.base, env, fn_table)
        if b == 0.0 and e.n < 0:
            raise EvalError("zero raised to a negative power")
        return b ** e.n
    if isinstance(e, App):
        a = eval_numeric(e.arg, env, fn_table)
        if e.fn == "sin":
            return math.sin(a)
        if e.fn == "cos":
            return math.cos(a)
        if e.fn == "exp":
            return math.exp(a)
        if e.fn == "ln":
            if a <= 0.0:
                raise EvalError(f"ln of non-positive value {a}")
            return math.log(a)
        if a < 0.0:
            raise EvalError(f"sqrt of negative value {a}")
        return math.sqrt(a)
    raise ExprError(f"unexpected node {e!r}")


def compile_numeric(e):
    """Compile to a closure f(env, fn_table) -> float for tight loops."""
    e = _as_expr(e)
    if isinstance(e, Rat):
        v = float(e.q)
        return lambda env, fns: v
    if isinstance(e, Par):
        if e.value is not None:
            v = float(e.value)
            return lambda env, fns: v
        name = e.name
        return lambda env, fns: env[name]
    if isinstance(e, Jet):
        tag = e.tag
        return lambda env, fns: env[tag]
    if isinstance(e, Coeff):
        name, delayed, order = e.name, e.delayed, e.order
        if delayed:
            return lambda env, fns: _coeff_value(
                fns, name, order, env["t"] - env["r"])
        return lambda env, fns: _coeff_value(fns, name, order, env["t"])
    if isinstance(e, Sum):
        fs = tuple(compile_numeric(t) for t in e.terms)
        return lambda env, fns: math.fsum(f(env, fns) for f in fs)
    if isinstance(e, Prod):
        fs = tuple(compile_numeric(f) for f in e.factors)

        def _prod(env, fns):
            out = 1.0
            for f in fs:
                out *= f(env, fns)
            return out

        return _prod
    if isinstance(e, Pow):
        fb = compile_numeric(e.base)
        n = e.n

        def _pow(env, fns):
            b = fb(env, fns)
            if b == 0.0 and n < 0:
                raise EvalError("zero raised to a negative power")
            return b ** n

        return _pow
    if isinstance(e, App):
        fa = compile_numeric(e.arg)
        if e.fn == "sin":
            return lambda env, fns: math.sin(fa(env, fns))
        if e.fn == "cos":
            return lambda env, fns: math.cos(fa(env, fns))
        if e.fn == "exp":
            return lambda env, fns: math.exp(fa(env, fns))
        if e.fn == "ln":
            def _ln(env, fns):
                a = fa(env, fns)
                if a <= 0.0:
                    raise EvalError(f"ln of non-positive value {a}")
                return math.log(a)

            return _ln

        def _sqrt(env, fns):
            a = fa(env, fns)
            if a < 0.0:
                raise EvalError(f"sqrt of negative value {a}")
            return math.sqrt(a)

        return _sqrt
    raise ExprError(f"unexpected node {e!r}")


# ---------------------------------------------------------------------------
# atoms present in an expression


def atoms(e):
    """Set of leaf symbols (Par, Jet, Coeff) appearing in the expression."""
    out = set()

    def walk(node):
        if isinstance(node, (Par, Jet, Coeff)):
            out.add(node)
        elif isinstance(node, Sum):
            for t in node.terms:
                walk(t)
        elif isinstance(node, Prod):
            for f in node.factors:
                walk(f)
        elif isinstance(node, Pow):
            walk(node.base)
        elif isinstance(node, App):
            walk(node.arg)

    walk(_as_expr(e))
    return out


# ---------------------------------------------------------------------------
# parsing


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d+)?)|(?P<ident>[A-Za-z_]\w*)"
    r"|(?P<primes>'+)|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip():
                raise ParseError(f"unexpected character {text[pos]!r}", pos)
            break
        if m.lastgroup is not None:
            tokens.append((m.lastgroup, m.group(m.lastgroup),
                           m.start(m.lastgroup)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, pos = self.peek()
        if kind != "op" or val != op:
            raise ParseError(f"expected {op!r}", pos)
        self.advance()

    def parse(self):
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", pos)
        return e

    def expr(self):
        terms = [self.term()]
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                t = self.term()
                terms.append(t if val == "+" else -t)
            else:
                break
        return terms[0] if len(terms) == 1 else Sum(tuple(terms))

    def term(self):
        e = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                rhs = self.unary()
                e = e * rhs if val == "*" else e / rhs
            else:
                break
        return e

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return -self.unary()
        if kind == "op" and val == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            return Pow(base, self.exponent())
        return base

    def exponent(self):
        kind, val, pos = self.peek()
        if kind == "op" and val == "(":
            self.advance()
            n = self.exponent()
            self.expect_op(")")
            return n
        sign = 1
        if kind == "op" and val == "-":
            self.advance()
            sign = -1
            kind, val, pos = self.peek()
        if kind != "num" or "." in val:
            raise ParseError("exponent must be an integer", pos)
        self.advance()
        return sign * int(val)

    def atom(self):
        kind, val, pos = self.advance()
        if kind == "num":
            return Rat(Fraction(val))
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        if kind == "ident":
            return self.ident(val, pos)
        raise ParseError(f"unexpected token {val!r}", pos)

    def ident(self, name, pos):
        primes = 0
        kind, val, _ = self.peek()
        if kind == "primes":
            primes = len(val)
            self.advance()

        if name == "x" and primes:
            if primes > 2:
                raise ParseError("at most two primes on x", pos)
            return X1 if primes == 1 else X2
        if primes == 0 and name in _JET_INDEX:
            return Jet(name)
        if primes == 0 and re.fullmatch(r"c\d+", name):
            return Par(name)
        if primes == 0 and name == "r":
            return R
        if name in _FN_INDEX:
            if primes:
                raise ParseError(f"primes not allowed on {name}", pos)
            self.expect_op("(")
            arg = self.expr()
            self.expect_op(")")
            return App(name, arg)

        kind, val, _ = self.peek()
        if not (kind == "op" and val == "("):
            raise ParseError(f"unknown identifier {name!r}", pos)
        if primes > _MAX_COEFF_ORDER:
            raise ParseError(
                f"derivative order {primes} exceeds {_MAX_COEFF_ORDER}", pos)
        self.advance()
        kind, val, apos = self.advance()
        if kind != "ident" or val != "t":
            raise ParseError(
                f"argument of {name} must be t or t-r", apos)
        delayed = False
        kind, val, apos = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            kind, val, apos = self.advance()
            if kind != "ident" or val != "r":
                raise ParseError(
                    f"argument of {name} must be t or t-r", apos)
            delayed = True
        self.expect_op(")")
        return Coeff(name, delayed, primes)


def parse(text) -> Expr:
    """Parse the expression grammar.  Raises ParseError with a position on
    syntax errors and unknown identifiers."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# rendering


def _needs_parens_in_product(e):
    return isinstance(e, Sum) or (isinstance(e, Rat) and e.q < 0)


def render(e) -> str:
    """Printable form; parse(render(e)) equals e up to normal form."""
    e = _as_expr(e)
    if isinstance(e, Rat):
        return str(e.q)
    if isinstance(e, Par):
        return e.name
    if isinstance(e, Jet):
        return e.tag
    if isinstance(e, Coeff):
        arg = "t-r" if e.delayed else "t"
        return f"{e.name}{chr(39) * e.order}({arg})"
    if isinstance(e, App):
        return f"{e.fn}({render(e.arg)})"
    if isinstance(e, Pow):
        b = render(e.base)
        if not isinstance(e.base, (Par, Jet, Coeff, App)):
            b = f"({b})"
        return f"{b}^{e.n}" if e.n >= 0 else f"{b}^({e.n})"
    if isinstance(e, Prod):
        parts = []
        for f in e.factors:
            s = render(f)
            if _needs_parens_in_product(f) and parts:
                s = f"({s})"
            elif isinstance(f, Sum):
                s = f"({s})"
            parts.append(s)
        return "*".join(parts)
    if isinstance(e, Sum):
        out = render(e.terms[0])
        for t in e.terms[1:]:
            s = render(t)
            if s.startswith("-"):
                out += " - " + s[1:]
            else:
                out += " + " + s
        return out
    raise ExprError(f"unexpected node {e!r}")
