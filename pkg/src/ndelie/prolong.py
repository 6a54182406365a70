"""Prolongation of point transformations to derivatives and delayed
arguments, and the extended operator acting on equation residuals.

An infinitesimal pair (omega, upsilon) in (t, x) is extended to the first
and second derivative coefficients, shifted to the delay point, and applied
to a second-order residual in solved form x'' = F.  The output of
apply_operator is the expression whose vanishing on the equation manifold
is the invariance condition.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .symexpr import (
    Expr, ExprError, Jet, Rat, T, X, X1, X1R, X2, X2R, XR, ZERO, atoms,
    collect, diff, diff_explicit, normalize, shift, substitute,
)

_FORBIDDEN_IN_ANSATZ = {"xr", "x1", "x1r", "x2", "x2r"}


@dataclass(frozen=True)
class InfinitesimalAnsatz:
    """Coefficients of the infinitesimal transformation: omega multiplies
    d/dt, upsilon multiplies d/dx.  Both live on (t, x) only."""

    omega: Expr
    upsilon: Expr

    def __post_init__(self):
        for name, e in (("omega", self.omega), ("upsilon", self.upsilon)):
            for a in atoms(e):
                if isinstance(a, Jet) and a.tag in _FORBIDDEN_IN_ANSATZ:
                    raise ExprError(
                        f"{name} may depend on t and x only, found {a.tag}")
                if getattr(a, "delayed", False) or \
                        getattr(a, "name", None) == "r":
                    raise ExprError(
                        f"{name} must not contain delayed symbols")

    def __add__(self, other):
        return InfinitesimalAnsatz(
            normalize(self.omega + other.omega),
            normalize(self.upsilon + other.upsilon))


@dataclass(frozen=True)
class Prolongation:
    """The shifted pair and the four prolongation coefficients."""

    omega_r: Expr
    upsilon_r: Expr
    ups_t: Expr
    ups_tt: Expr
    ups_t_r: Expr
    ups_tt_r: Expr


@dataclass(frozen=True)
class EquationResidual:
    """Expression whose zero set is the equation; must be degree one in x''
    with a constant coefficient so the solved form exists."""

    delta: Expr

    def solved_rhs(self) -> Expr:
        """F such that delta = 0 is equivalent to x'' = F."""
        parts = collect(normalize(self.delta), {X2})
        lead = parts.get(X2, ZERO)
        if not isinstance(lead, Rat) or lead.q == 0:
            raise ExprError("equation is not solvable for x''")
        rest = normalize(self.delta - lead * X2)
        return normalize(Rat(Fraction(-1) / lead.q) * rest)


def total_derivative(e) -> Expr:
    """Total t-derivative d/dt + x' d/dx + x'' d/dx', for expressions
    depending on t, x, x' at most."""
    for a in atoms(e):
        if isinstance(a, Jet) and a.tag in ("x2", "xr", "x1r", "x2r"):
            raise ExprError(
                f"total derivative of an expression in {a.tag} would need "
                "jet coordinates beyond x''")
    return normalize(diff(e, T) + X1 * diff(e, X) + X2 * diff(e, X1))


def prolong_first(a: InfinitesimalAnsatz) -> Expr:
    """First prolongation coefficient:
    upsilon_t + (upsilon_x - omega_t) x' - omega_x x'^2."""
    w, u = a.omega, a.upsilon
    return normalize(
        diff(u, T) + (diff(u, X) - diff(w, T)) * X1 - diff(w, X) * X1 ** 2)


def prolong_second(a: InfinitesimalAnsatz) -> Expr:
    """Second prolongation coefficient, as the five-term expansion in
    x' and x''."""
    w, u = a.omega, a.upsilon
    u_tt = diff(diff(u, T), T)
    u_tx = diff(diff(u, T), X)
    u_xx = diff(diff(u, X), X)
    w_tt = diff(diff(w, T), T)
    w_tx = diff(diff(w, T), X)
    w_xx = diff(diff(w, X), X)
    return normalize(
        u_tt
        + (2 * u_tx - w_tt) * X1
        + (u_xx - 2 * w_tx) * X1 ** 2
        - w_xx * X1 ** 3
        + (diff(u, X) - 2 * diff(w, T)) * X2
        - 3 * diff(w, X) * X1 * X2)


def prolong_delayed(a: InfinitesimalAnsatz) -> Prolongation:
    """Delay shift of the pair and of both prolongation coefficients;
    every atom is replaced by its delayed counterpart."""
    ups_t = prolong_first(a)
    ups_tt = prolong_second(a)
    return Prolongation(
        omega_r=shift(a.omega),
        upsilon_r=shift(a.upsilon),
        ups_t=ups_t,
        ups_tt=ups_tt,
        ups_t_r=shift(ups_t),
        ups_tt_r=shift(ups_tt),
    )


def apply_operator(a: InfinitesimalAnsatz, eq: EquationResidual) -> Expr:
    """Apply the extended operator to the residual and eliminate x'' via
    the solved form afterwards; x''(t-r) stays an independent coordinate.

    Explicit dependence on the delayed time must enter F through
    coefficient functions of t-r; those derivatives are multiplied by the
    shifted omega.
    """
    F = eq.solved_rhs()
    p = prolong_delayed(a)
    operator_terms = (
        a.omega * diff_explicit(F, "t")
        + a.upsilon * diff(F, X)
        + p.omega_r * diff_explicit(F, "tr")
        + p.upsilon_r * diff(F, XR)
        + p.ups_t * diff(F, X1)
        + p.ups_t_r * diff(F, X1R)
        + p.ups_tt_r * diff(F, X2R)
    )
    residual = normalize(p.ups_tt - operator_terms)
    return substitute(residual, {X2: F})
