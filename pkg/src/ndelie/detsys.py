"""Determining equations for the reduced equation

    x'' + b x'(t-r) + c x + d x(t-r) + k x''(t-r) = 0.

The invariance residual is generated with an unknown infinitesimal pair,
split by jet monomials, specialized to the affine ansatz
omega = beta(t), upsilon = gamma(t) x + rho(t), and rewritten into the
omega-form constraint system.  Functional delay equalities such as
beta(t) = beta(t-r) are carried as first-class constraints and checked
numerically; hand integrations are performed by candidate-and-verify
first-integral rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .equation import NdeSpec
from .prolong import EquationResidual, InfinitesimalAnsatz, apply_operator
from .symexpr import (
    Coeff, Expr, ExprError, Par, Rat, T, X, X1, X1R, X2, X2R, XR, ZERO,
    atoms, collect, diff, equivalent, eval_numeric, fn, normalize, num,
    render, substitute,
)

SPLIT_JETS = (X, XR, X1, X1R, X2, X2R)


@dataclass(frozen=True)
class Assumption:
    subject: str
    prop: str  # 'nonzero' | 'constant' | 'zero' | 'delay-equal' | free text
    note: str = ""

    def describe(self):
        s = f"{self.subject}: {self.prop}"
        return f"{s} ({self.note})" if self.note else s


@dataclass(frozen=True)
class FunctionalConstraint:
    """An equality between an expression of t and its delay shift."""

    label: str
    lhs: Expr
    rhs: Expr

    def check_numeric(self, fn_table, r, t_lo, span=None, points=50,
                      tol=1e-9, params=None):
        """Max |lhs - rhs| over a grid of one to three delay periods."""
        span = 3 * r if span is None else span
        env = dict(params or {})
        env["r"] = r
        worst = 0.0
        for t in np.linspace(t_lo, t_lo + span, points):
            env["t"] = float(t)
            try:
                v = eval_numeric(self.lhs, env, fn_table) - \
                    eval_numeric(self.rhs, env, fn_table)
            except ExprError:
                continue
            worst = max(worst, abs(v))
        return worst


@dataclass
class DetEquation:
    monomial: Expr
    residual: Expr
    catalog_id: str | None = None
    integrated: Expr | None = None
    constant_introduced: str | None = None
    note: str = ""

    def to_json(self):
        out = {"monomial": render(self.monomial),
               "residual": render(self.residual)}
        if self.catalog_id:
            out["catalog"] = self.catalog_id
        if self.integrated is not None:
            out["integrated"] = render(self.integrated)
        if self.constant_introduced:
            out["constant"] = self.constant_introduced
        if self.note:
            out["note"] = self.note
        return out


@dataclass
class DeterminingSystem:
    equations: list
    functional_constraints: list = field(default_factory=list)
    assumptions: list = field(default_factory=list)
    spec: NdeSpec | None = None
    ansatz: InfinitesimalAnsatz | None = None

    def nontrivial(self):
        return [eq for eq in self.equations if eq.residual != ZERO]

    def find(self, monomial):
        monomial = normalize(monomial)
        for eq in self.equations:
            if eq.monomial == monomial:
                return eq
        return None

    def by_catalog(self, catalog_id):
        for eq in self.equations:
            if eq.catalog_id == catalog_id:
                return eq
        return None

    def to_report(self):
        return {
            "equations": [eq.to_json() for eq in self.nontrivial()],
            "functional_constraints": [fc.label
                                       for fc in self.functional_constraints],
            "assumptions": [a.describe() for a in self.assumptions],
        }


# ---------------------------------------------------------------------------
# ansatz builders


def generic_ansatz() -> InfinitesimalAnsatz:
    """Unknown pair, polynomial in x up to degree two.  Second x-partials
    are all the residual ever uses, so this truncation exhibits every split
    the unknown pair is subject to."""
    omega = fn("beta") + fn("alpha") * X + fn("alpha2") * X ** 2
    upsilon = fn("rho") + fn("gamma") * X + fn("gamma2") * X ** 2
    return InfinitesimalAnsatz(normalize(omega), normalize(upsilon))


def reduced_ansatz() -> InfinitesimalAnsatz:
    return InfinitesimalAnsatz(fn("beta"),
                               normalize(fn("gamma") * X + fn("rho")))


# ---------------------------------------------------------------------------
# residual generation and splitting


def invariance_residual(spec: NdeSpec, a: InfinitesimalAnsatz) -> Expr:
    """Residual of the extended operator applied to the reduced equation."""
    if not spec.h.is_zero or not spec.a.is_zero:
        raise ExprError(
            "invariance residual expects the reduced form h = 0, a = 0; "
            "apply homogenize / remove_first_derivative first")
    delta = EquationResidual(normalize(
        X2 + spec.b.symbolic("b") * X1R + spec.c.symbolic("c") * X
        + spec.d.symbolic("d") * XR + spec.k.symbolic("k") * X2R))
    return apply_operator(a, delta)


def split(residual: Expr, spec: NdeSpec = None,
          ansatz: InfinitesimalAnsatz = None) -> DeterminingSystem:
    """One equation per jet monomial with nonzero coefficient, plus the
    delay-point constraint omega(t-r, x(t-r)) = omega(t, x)."""
    parts = collect(residual, set(SPLIT_JETS))
    equations = [DetEquation(monomial=m, residual=coeff)
                 for m, coeff in sorted(parts.items(),
                                        key=lambda kv: render(kv[0]))]
    constraints = []
    if ansatz is not None:
        from .symexpr import shift

        constraints.append(FunctionalConstraint(
            label="omega(t,x) = omega(t-r, x(t-r))",
            lhs=ansatz.omega, rhs=shift(ansatz.omega)))
    return DeterminingSystem(equations=equations,
                             functional_constraints=constraints,
                             spec=spec, ansatz=ansatz)


def determine(spec: NdeSpec, a: InfinitesimalAnsatz = None):
    a = generic_ansatz() if a is None else a
    return split(invariance_residual(spec, a), spec, a)


# ---------------------------------------------------------------------------
# first-integral rules (candidate construction, verified by differentiation)


def verify_first_integral(derivative_form: Expr, candidate: Expr) -> bool:
    return equivalent(diff(candidate, T), derivative_form)


def linear_antiderivative(e: Expr):
    """Antiderivative of a constant-coefficient combination of derivatives
    of coefficient functions, e.g. 2 gamma'(t) - beta''(t).  Returns None
    when the pattern does not apply."""
    e = normalize(e)
    terms = e.terms if hasattr(e, "terms") else (e,)
    candidate = ZERO
    for t in terms:
        factors = t.factors if hasattr(t, "factors") else (t,)
        coeff = Rat(1)
        base = None
        for f in factors:
            if isinstance(f, Rat):
                coeff = f
            elif isinstance(f, Coeff) and not f.delayed and f.order >= 1:
                if base is not None:
                    return None
                base = f
            else:
                return None
        if base is None:
            return None
        candidate = candidate + coeff * Coeff(base.name, False, base.order - 1)
    candidate = normalize(candidate)
    if not verify_first_integral(e, candidate):
        return None
    return candidate


def product_antiderivative(e: Expr):
    """Antiderivative for the product pattern f g' + f' g -> f g."""
    e = normalize(e)
    terms = e.terms if hasattr(e, "terms") else ()
    if len(terms) != 2:
        return None
    for t in terms:
        factors = t.factors if hasattr(t, "factors") else (t,)
        if len(factors) != 2:
            return None
        f1, f2 = factors
        if not (isinstance(f1, Coeff) and isinstance(f2, Coeff)):
            return None
        for hi, lo in ((f1, f2), (f2, f1)):
            if hi.order >= 1:
                candidate = normalize(
                    Coeff(hi.name, hi.delayed, hi.order - 1) * lo)
                if verify_first_integral(e, candidate):
                    return candidate
    return None


# ---------------------------------------------------------------------------
# reduction to the affine ansatz


def apply_delay_equalities(e: Expr, names) -> Expr:
    """Rewrite f(t-r) and its derivatives to f(t) for the named functions,
    as licensed by a delay-equality constraint on f."""
    bindings = {}
    for name in names:
        for order in range(4):
            bindings[Coeff(name, True, order)] = Coeff(name, False, order)
    return substitute(e, bindings)


def reduce_ansatz(sys: DeterminingSystem) -> DeterminingSystem:
    """Specialize the generic system to omega = beta(t),
    upsilon = gamma(t) x + rho(t).

    The three eliminations are read off the generic split: the cubic
    delayed-velocity row kills the x^2 part of omega, the mixed
    velocity/acceleration rows kill the x-linear part (using k != 0 when a
    neutral term is present, otherwise the x' x'' coefficient of the
    second-prolongation expansion), and the squared-velocity row kills the
    x^2 part of upsilon.
    """
    if sys.spec is None or sys.ansatz is None:
        raise ExprError("reduce_ansatz needs the system context")
    spec = sys.spec
    assumptions = list(sys.assumptions)

    cubic = sys.find(X1R ** 3)
    if cubic is not None and cubic.residual != ZERO:
        if fn("alpha2", delayed=True) not in atoms(cubic.residual):
            raise ExprError("unexpected cubic delayed-velocity row")
    assumptions.append(Assumption(
        "omega", "affine in x",
        "cubic velocity rows force the second x-derivative of omega to "
        "vanish"))

    if not spec.k.is_zero:
        assumptions.append(Assumption(
            "k", "nonzero",
            "neutral term present; the x'(t-r) x''(t-r) row factors "
            "through k and kills the x-linear part of omega"))
    else:
        assumptions.append(Assumption(
            "omega", "independent of x",
            "with no neutral term the x' x'' coefficient of the "
            "second-prolongation expansion forces it before the "
            "acceleration is eliminated"))

    assumptions.append(Assumption(
        "upsilon", "affine in x",
        "the squared-velocity row forces the second x-derivative of "
        "upsilon to vanish"))

    red = reduced_ansatz()
    residual = invariance_residual(spec, red)
    out = split(residual, spec, red)

    # delay equalities: beta from the delay point, gamma through the
    # velocity split below
    out.functional_constraints = [
        FunctionalConstraint("beta(t) = beta(t-r)",
                             fn("beta"), fn("beta", delayed=True)),
        FunctionalConstraint("gamma(t) = gamma(t-r)",
                             fn("gamma"), fn("gamma", delayed=True)),
    ]
    out.assumptions = assumptions

    for eq in out.equations:
        if eq.monomial == X:
            eq.catalog_id = "E-x"
        elif eq.monomial == X1:
            eq.catalog_id = "E-x1"
            anti = linear_antiderivative(eq.residual)
            if anti is not None:
                eq.integrated = normalize(anti - Par("c1"))
                eq.constant_introduced = "c1"
        elif eq.monomial == num(1):
            eq.catalog_id = "E-1"
        elif eq.monomial == X2R:
            eq.residual = apply_delay_equalities(
                eq.residual, ("beta", "gamma"))
            eq.catalog_id = "E-x2r"
            eq.note = "delay equalities for beta and gamma applied"
        elif eq.monomial == XR:
            eq.residual = apply_delay_equalities(
                eq.residual, ("beta", "gamma"))
            eq.catalog_id = "E-xr"
            eq.note = "delay equalities for beta and gamma applied"
        elif eq.monomial == X1R:
            # the velocity-split relation gamma = (beta' + c1)/2 removes
            # the delayed copy of the velocity row that rides along here
            eq.residual = substitute(
                apply_delay_equalities(eq.residual, ("beta", "gamma")),
                GAMMA_RULE)
            eq.catalog_id = "E-x1r"
            eq.note = ("delay equalities and the integrated velocity "
                       "split applied")
            anti = product_antiderivative(eq.residual)
            if anti is not None:
                eq.integrated = normalize(anti - Par("c3"))
                eq.constant_introduced = "c3"
    return out


GAMMA_RULE = {fn("gamma"):
              normalize(num(1) / 2 * (fn("beta", order=1) + Par("c1")))}


def canonical_constraints(sys: DeterminingSystem) -> DeterminingSystem:
    """Rewrite the reduced system in terms of omega alone, using the
    integrated velocity split gamma = (beta' + c1)/2 and renaming beta to
    omega.  The delayed-acceleration branch equation beta k' = 0 is kept;
    the omega-form of the delayed-position row assumes k constant (= c2)."""
    rename = {fn("beta"): fn("omega")}
    w = fn("omega")
    w1, w2, w3 = (fn("omega", order=i) for i in (1, 2, 3))

    equations = []
    assumptions = list(sys.assumptions)

    ex = sys.find(X)
    if ex is not None:
        e = substitute(substitute(ex.residual, GAMMA_RULE), rename)
        equations.append(DetEquation(
            monomial=X, residual=normalize(2 * e),
            catalog_id="E-omega-c",
            note="third-order constraint tying c(t) to omega"))

    exr = sys.find(XR)
    if exr is not None:
        e = substitute(substitute(exr.residual, GAMMA_RULE), rename)
        e = substitute(e, {fn("k"): Par("c2")})
        equations.append(DetEquation(
            monomial=XR, residual=normalize(2 * e),
            catalog_id="E-omega-d",
            note="k constant (= c2) substituted"))
        assumptions.append(Assumption(
            "k", "constant", "delayed-acceleration row leaves the branch "
            "beta = 0 or k constant; this is the constant branch"))

    ex2r = sys.find(X2R)
    if ex2r is not None:
        equations.append(DetEquation(
            monomial=X2R, residual=substitute(ex2r.residual, rename),
            catalog_id="E-x2r",
            note="branch equation: omega k' = 0"))

    ex1r = sys.find(X1R)
    if ex1r is not None and ex1r.integrated is not None:
        eq = DetEquation(
            monomial=X1R,
            residual=substitute(ex1r.integrated, rename),
            catalog_id="E-omega-b",
            note="integrated delayed-velocity row; with b nonvanishing "
                 "it pins omega = c3 / b")
        equations.append(eq)
        assumptions.append(Assumption(
            "b", "nonzero", "required to solve the integrated "
            "delayed-velocity row for omega"))

    equations.append(DetEquation(
        monomial=num(1),
        residual=substitute(sys.find(num(1)).residual, rename)
        if sys.find(num(1)) else ZERO,
        catalog_id="E-1",
        note="rho solves the homogeneous equation"))

    equations.append(DetEquation(
        monomial=X1,
        residual=normalize(fn("gamma") - num(1) / 2 * (w1 + Par("c1"))),
        catalog_id="E-upsilon",
        note="upsilon = ((omega_t + c1)/2) x + rho"))

    return DeterminingSystem(equations=equations,
                             functional_constraints=[
                                 FunctionalConstraint(
                                     "omega(t) = omega(t-r)", w,
                                     fn("omega", delayed=True))],
                             assumptions=assumptions,
                             spec=sys.spec, ansatz=sys.ansatz)


# ---------------------------------------------------------------------------
# catalog of the classical determining equations (neutral ids)


def _beta(o=0, d=False):
    return Coeff("beta", d, o)


def _gamma(o=0, d=False):
    return Coeff("gamma", d, o)


def _rho(o=0, d=False):
    return Coeff("rho", d, o)


def catalog() -> dict:
    """Golden normal forms of the classical split system."""
    b, c, d, k = fn("b"), fn("c"), fn("d"), fn("k")
    w = fn("omega")
    w1, w2, w3 = (fn("omega", order=i) for i in (1, 2, 3))
    return {
        "E-x": normalize(_gamma(2) + 2 * _beta(1) * c + _beta() * fn("c", order=1)),
        "E-x1": normalize(2 * _gamma(1) - _beta(2)),
        "E-x1-int": normalize(_gamma() - num(1) / 2 * (_beta(1) + Par("c1"))),
        "E-1": normalize(_rho(2) + b * _rho(1, True) + c * _rho()
                         + d * _rho(0, True) + k * _rho(2, True)),
        "E-x2r": normalize(_beta() * fn("k", order=1)),
        "E-xr": normalize(k * _gamma(2) + 2 * _beta(1) * d
                          + _beta() * fn("d", order=1) + b * _gamma(1)),
        "E-x1r": normalize(b * _beta(1) + _beta() * fn("b", order=1)),
        "E-x1r-int": normalize(b * _beta() - Par("c3")),
        "E-omega-c": normalize(w3 + 4 * c * w1 + 2 * fn("c", order=1) * w),
        "E-omega-d": normalize(Par("c2") * w3 + 2 * fn("d", order=1) * w
                               + 4 * d * w1 + b * w2),
        "E-omega-b": normalize(b * w - Par("c3")),
        "E-upsilon": normalize(_gamma() - num(1) / 2
                               * (fn("omega", order=1) + Par("c1"))),
    }


def match_catalog(e: Expr, table=None):
    """Catalog id whose golden form equals e up to a nonzero rational
    scale, under either the beta or the omega naming, if any."""
    table = catalog() if table is None else table
    e = normalize(e)
    if e == ZERO:
        return None
    renamed = substitute(e, {fn("omega"): fn("beta")})
    for cid, golden in table.items():
        beta_golden = substitute(golden, {fn("omega"): fn("beta")})
        if _match_up_to_scale(e, golden) or \
                _match_up_to_scale(renamed, beta_golden):
            return cid
    return None


def _leading_coeff(e):
    p_terms = e.terms if hasattr(e, "terms") else (e,)
    first = p_terms[0]
    factors = first.factors if hasattr(first, "factors") else (first,)
    for f in factors:
        if isinstance(f, Rat):
            return f.q
    return 1


def _match_up_to_scale(e1, e2):
    from fractions import Fraction

    c1, c2 = _leading_coeff(e1), _leading_coeff(e2)
    if c1 == 0 or c2 == 0:
        return e1 == e2
    return normalize(Rat(Fraction(c2) / Fraction(c1)) * e1) == normalize(e2)


# ---------------------------------------------------------------------------
# zero testing


@dataclass(frozen=True)
class ZeroResult:
    ok: bool
    mode: str  # 'symbolic' | 'sampled'
    max_abs: float = 0.0
    skipped: int = 0

    def __bool__(self):
        return self.ok


def _instance_family(name, assumptions, rng, r):
    """Concrete coefficient instance with analytic derivatives honoring the
    recorded assumptions for this name."""
    props = {a.prop for a in assumptions if a.subject == name}
    if "zero" in props:
        z = lambda t: 0.0
        return [z, z, z, z]
    if "constant" in props:
        v = rng.uniform(0.5, 2.0)
        zero = lambda t: 0.0
        return [lambda t: v, zero, zero, zero]
    if "delay-equal" in props:
        w = 2.0 * math.pi / r
        a1, a2 = rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)
        c0 = rng.uniform(1.0, 2.0) if "nonzero" in props else \
            rng.uniform(-0.5, 0.5)
        return [
            lambda t: c0 + a1 * math.sin(w * t) + a2 * math.cos(w * t),
            lambda t: w * (a1 * math.cos(w * t) - a2 * math.sin(w * t)),
            lambda t: -w * w * (a1 * math.sin(w * t) + a2 * math.cos(w * t)),
            lambda t: -w ** 3 * (a1 * math.cos(w * t) - a2 * math.sin(w * t)),
        ]
    a0 = rng.uniform(-1.5, 1.5)
    a1 = rng.uniform(-1.0, 1.0)
    a2 = rng.uniform(-1.0, 1.0)
    wv = rng.uniform(0.5, 1.5)
    if "nonzero" in props:
        a0 = (2.0 + abs(a0)) * (1 if rng.random() < 0.5 else -1)
    return [
        lambda t: a0 + a1 * t + a2 * math.sin(wv * t),
        lambda t: a1 + a2 * wv * math.cos(wv * t),
        lambda t: -a2 * wv * wv * math.sin(wv * t),
        lambda t: -a2 * wv ** 3 * math.cos(wv * t),
    ]


def is_zero(e: Expr, assumptions=(), fn_table=None, params=None,
            seed=0, tol=1e-9, points=64) -> ZeroResult:
    """Symbolic-or-sampled zero test.

    Returns symbolic truth when the normal form vanishes; otherwise samples
    64 points with t in [0.1, 4], jet values in [-2, 2], and concrete
    coefficient instances satisfying the assumptions.  Singular sample
    points are skipped and counted.
    """
    canon = normalize(e)
    if canon == ZERO:
        return ZeroResult(True, "symbolic")

    rng = np.random.RandomState(seed)

    class _Rng:
        def uniform(self, lo, hi):
            return float(rng.uniform(lo, hi))

        def random(self):
            return float(rng.random_sample())

    wrapped = _Rng()
    params = dict(params or {})
    r = float(params.get("r", wrapped.uniform(0.5, 2.0)))

    table = dict(fn_table or {})
    for atom in atoms(canon):
        if isinstance(atom, Coeff) and atom.name not in table:
            table[atom.name] = _instance_family(
                atom.name, assumptions, wrapped, r)

    jet_names = [j.tag for j in SPLIT_JETS] + ["x2"]
    par_names = sorted({a.name for a in atoms(canon)
                        if isinstance(a, Par) and a.value is None
                        and a.name != "r" and a.name not in params})

    worst = 0.0
    skipped = 0
    evaluated = 0
    for _ in range(points):
        env = {"r": r, "t": wrapped.uniform(0.1, 4.0)}
        for name in jet_names:
            env[name] = wrapped.uniform(-2.0, 2.0)
        for name in par_names:
            env[name] = wrapped.uniform(-2.0, 2.0)
        env.update(params)
        try:
            v = eval_numeric(canon, env, table)
        except ExprError:
            skipped += 1
            continue
        evaluated += 1
        worst = max(worst, abs(v))
    if evaluated == 0:
        return ZeroResult(False, "sampled", float("inf"), skipped)
    return ZeroResult(worst < tol, "sampled", worst, skipped)
