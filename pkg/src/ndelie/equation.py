"""Coefficient descriptors and the equation record for

    x'' + a x' + b x'(t-r) + c x + d x(t-r) + k x''(t-r) = h

with a single constant delay r > 0.  Descriptors carry one of four kinds
(zero, exact constant, closed-form expression in t, numeric callable) and
can produce both the symbolic coefficient used when building residuals and
numeric values with derivatives up to order three.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .symexpr import (
    Coeff, Expr, ExprError, Par, Rat, T, ZERO, atoms, compile_numeric, diff,
    normalize, parse, render,
)

COEFF_NAMES = ("a", "b", "c", "d", "k", "h")


@dataclass
class CoeffDescriptor:
    """One coefficient of the equation.

    kind 'zero'     -- identically zero
    kind 'const'    -- exact rational value, optionally carrying a name
    kind 'closed'   -- closed-form Expr in t, differentiable symbolically
    kind 'numeric'  -- callables for orders 0..3
    """

    kind: str
    value: Fraction | None = None
    const_name: str | None = None
    expr: Expr | None = None
    fns: tuple | None = None
    nonvanishing: bool | None = None
    _compiled: tuple = field(default=None, repr=False, compare=False)

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def const(cls, value, name=None, nonvanishing=None):
        value = Fraction(value)
        if value == 0 and name is None:
            return cls.zero()
        return cls("const", value=value, const_name=name,
                   nonvanishing=nonvanishing)

    @classmethod
    def closed(cls, expr, nonvanishing=None):
        if isinstance(expr, str):
            expr = parse(expr)
        expr = normalize(expr)
        if isinstance(expr, Rat):
            return cls.const(expr.q, nonvanishing=nonvanishing)
        for atom in atoms(expr):
            if not isinstance(atom, (Par,)) and atom != T:
                if isinstance(atom, Coeff):
                    continue  # opaque named function of t is allowed
                raise ExprError(
                    f"closed coefficient must be a function of t, found "
                    f"{render(atom)}")
        return cls("closed", expr=expr, nonvanishing=nonvanishing)

    @classmethod
    def numeric(cls, *fns, nonvanishing=None):
        if not fns:
            raise ExprError("numeric descriptor needs at least f(t)")
        return cls("numeric", fns=tuple(fns), nonvanishing=nonvanishing)

    @classmethod
    def from_table(cls, ts, vs, nonvanishing=None):
        from scipy.interpolate import CubicSpline

        spline = CubicSpline(np.asarray(ts, float), np.asarray(vs, float))
        ders = [spline] + [spline.derivative(i) for i in range(1, 4)]
        return cls("numeric",
                   fns=tuple((lambda d: (lambda t: float(d(t))))(d)
                             for d in ders),
                   nonvanishing=nonvanishing)

    # -- predicates ---------------------------------------------------------

    @property
    def is_zero(self):
        return self.kind == "zero"

    @property
    def is_const(self):
        return self.kind in ("zero", "const")

    def const_value(self):
        if self.kind == "zero":
            return Fraction(0)
        if self.kind == "const":
            return self.value
        return None

    # -- symbolic and numeric views -----------------------------------------

    def symbolic(self, name) -> Expr:
        """Expression used when this coefficient enters a residual."""
        if self.kind == "zero":
            return ZERO
        if self.kind == "const":
            if self.const_name is not None and self.value is None:
                return Par(self.const_name)
            return Rat(self.value)
        if self.kind == "closed":
            return self.expr
        return Coeff(name)

    def _derivative_chain(self):
        if self._compiled is None:
            if self.kind == "closed":
                exprs = [self.expr]
                for _ in range(3):
                    exprs.append(diff(exprs[-1], T))
                self._compiled = tuple(compile_numeric(e) for e in exprs)
            else:
                self._compiled = ()
        return self._compiled

    def eval(self, t, order=0):
        if order > 3:
            raise ExprError(f"derivative order {order} exceeds 3")
        if self.kind == "zero":
            return 0.0
        if self.kind == "const":
            return float(self.value) if order == 0 else 0.0
        if self.kind == "closed":
            return self._derivative_chain()[order]({"t": float(t)}, None)
        if order >= len(self.fns):
            raise ExprError(
                f"numeric descriptor supplies orders 0..{len(self.fns) - 1}")
        return float(self.fns[order](t))

    def fn_entry(self):
        """Entry for a symexpr fn_table: callables indexed by order."""
        return [lambda t, o=o: self.eval(t, o) for o in range(4)]

    # -- JSON ---------------------------------------------------------------

    def to_json(self):
        if self.kind == "zero":
            return {"kind": "zero"}
        if self.kind == "const":
            out = {"kind": "const", "value": str(self.value)}
            if self.const_name:
                out["name"] = self.const_name
            return out
        if self.kind == "closed":
            return {"kind": "closed", "expr": render(self.expr)}
        return {"kind": "numeric-table"}

    @classmethod
    def from_json(cls, obj):
        kind = obj.get("kind")
        if kind == "zero":
            return cls.zero()
        if kind == "const":
            return cls.const(Fraction(str(obj["value"])),
                             name=obj.get("name"))
        if kind == "closed":
            return cls.closed(obj["expr"])
        if kind == "numeric-table":
            samples = obj["samples"]
            ts = [s[0] for s in samples]
            vs = [s[1] for s in samples]
            return cls.from_table(ts, vs)
        raise ExprError(f"unknown descriptor kind {kind!r}")


@dataclass
class NdeSpec:
    """The equation x'' + a x' + b x'(t-r) + c x + d x(t-r) + k x''(t-r) = h."""

    a: CoeffDescriptor
    b: CoeffDescriptor
    c: CoeffDescriptor
    d: CoeffDescriptor
    k: CoeffDescriptor
    h: CoeffDescriptor
    r: float
    t0: float = 0.0

    def __post_init__(self):
        if not self.r > 0:
            raise ExprError("delay r must be positive")

    @classmethod
    def make(cls, *, a=None, b=None, c=None, d=None, k=None, h=None,
             r=1.0, t0=0.0):
        def coerce(v):
            if v is None:
                return CoeffDescriptor.zero()
            if isinstance(v, CoeffDescriptor):
                return v
            if isinstance(v, str):
                return CoeffDescriptor.closed(v)
            if isinstance(v, (int, Fraction)):
                return CoeffDescriptor.const(v)
            if isinstance(v, Expr):
                return CoeffDescriptor.closed(v)
            raise ExprError(f"cannot build a descriptor from {v!r}")

        return cls(coerce(a), coerce(b), coerce(c), coerce(d), coerce(k),
                   coerce(h), float(r), float(t0))

    def descriptors(self):
        return dict(zip(COEFF_NAMES,
                        (self.a, self.b, self.c, self.d, self.k, self.h)))

    def fn_table(self):
        return {name: desc.fn_entry()
                for name, desc in self.descriptors().items()
                if desc.kind in ("closed", "numeric")}

    def rhs_solved(self):
        """Numeric x'' = h - a x' - b x'(t-r) - c x - d x(t-r) - k x''(t-r)."""
        a, b, c, d, k, h = (self.a, self.b, self.c, self.d, self.k, self.h)

        def f(t, x, xr, x1, x1r, x2r):
            return (h.eval(t) - a.eval(t) * x1 - b.eval(t) * x1r
                    - c.eval(t) * x - d.eval(t) * xr - k.eval(t) * x2r)

        return f

    def residual_expr(self) -> Expr:
        """Symbolic h-moved-left residual of the full equation."""
        from .symexpr import X, X1, X1R, X2, X2R, XR

        return normalize(
            X2 + self.a.symbolic("a") * X1 + self.b.symbolic("b") * X1R
            + self.c.symbolic("c") * X + self.d.symbolic("d") * XR
            + self.k.symbolic("k") * X2R - self.h.symbolic("h"))

    def to_json(self):
        out = {name: desc.to_json()
               for name, desc in self.descriptors().items()}
        out["r"] = self.r
        out["t0"] = self.t0
        return out

    @classmethod
    def from_json(cls, obj):
        kwargs = {}
        for name in COEFF_NAMES:
            if name in obj:
                kwargs[name] = CoeffDescriptor.from_json(obj[name])
            else:
                kwargs[name] = CoeffDescriptor.zero()
        return cls(r=float(obj["r"]), t0=float(obj.get("t0", 0.0)), **kwargs)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
