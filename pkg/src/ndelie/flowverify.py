"""Finite one-parameter transformations from infinitesimal generators, and
the two numeric invariance tests.

flow() exponentiates a generator by integrating dt/d(delta) = omega,
dx/d(delta) = upsilon with RK4 in the group parameter.  A solution curve is
carried through the flow and resampled as a function of the new time; the
infinitesimal test evaluates the invariance residual along a trajectory,
the finite test measures how well the transformed curve still solves the
equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classify import Generator
from .detsys import invariance_residual, reduced_ansatz
from .equation import NdeSpec
from .ndesolve import Trajectory
from .symexpr import (
    EvalError, ExprError, T, ZERO, compile_numeric, diff, normalize,
)


def _rho_chain(rho):
    if rho is None:
        return [lambda t: 0.0] * 4
    if isinstance(rho, Trajectory):
        return [lambda t, o=o: rho.value(t, o) for o in range(3)] + \
            [lambda t: 0.0]
    return rho  # already a chain of callables


def generator_callables(gen: Generator, spec: NdeSpec, rho=None):
    """(omega(t, x), upsilon(t, x)) as floats for flowing."""
    table = spec.fn_table()
    table["rho"] = _rho_chain(rho)
    if gen.kind == "numeric":
        sol = gen.omega_numeric

        def omega(t, x):
            return sol.value(t, 0)

        def upsilon(t, x):
            return 0.5 * sol.value(t, 1) * x

        return omega, upsilon
    fw = compile_numeric(gen.omega if gen.omega is not None else ZERO)
    fu = compile_numeric(gen.upsilon if gen.upsilon is not None else ZERO)

    def omega(t, x):
        return fw({"t": t, "x": x, "r": spec.r}, table)

    def upsilon(t, x):
        return fu({"t": t, "x": x, "r": spec.r}, table)

    return omega, upsilon


def flow(gen: Generator, points, delta, spec: NdeSpec, rho=None,
         substeps=64):
    """RK4 exponentiation of the generator from each point; entries become
    None where the flow leaves the numeric domain."""
    omega, upsilon = generator_callables(gen, spec, rho)
    n = max(int(substeps), 1)
    h = delta / n
    out = []
    for (t, x) in points:
        tb, xb = float(t), float(x)
        try:
            for _ in range(n):
                k1t, k1x = omega(tb, xb), upsilon(tb, xb)
                k2t = omega(tb + h / 2 * k1t, xb + h / 2 * k1x)
                k2x = upsilon(tb + h / 2 * k1t, xb + h / 2 * k1x)
                k3t = omega(tb + h / 2 * k2t, xb + h / 2 * k2x)
                k3x = upsilon(tb + h / 2 * k2t, xb + h / 2 * k2x)
                k4t = omega(tb + h * k3t, xb + h * k3x)
                k4x = upsilon(tb + h * k3t, xb + h * k3x)
                tb += h / 6 * (k1t + 2 * k2t + 2 * k3t + k4t)
                xb += h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
            if not (math.isfinite(tb) and math.isfinite(xb)):
                out.append(None)
            else:
                out.append((tb, xb))
        except (EvalError, ExprError, OverflowError):
            out.append(None)
    return out


@dataclass
class TransformedCurve:
    """Piecewise-spline image of a solution; segment boundaries are the
    images of the derivative-breaking points, so no fit straddles a jump
    of the transported acceleration."""

    boundaries: np.ndarray
    segments: list  # per segment: (lo, hi, (spline, spline', spline''))
    t_lo: float
    t_hi: float

    def value(self, t, der=0):
        if not (self.t_lo - 1e-9 <= t <= self.t_hi + 1e-9):
            raise ExprError(f"transformed curve query at {t} out of range")
        for lo, hi, splines in self.segments:
            if lo - 1e-9 <= t <= hi + 1e-9:
                return float(splines[der](t))
        raise ExprError(f"transformed curve query at {t} hit no segment")

    def to_csv(self, path, points=200):
        ts = np.linspace(self.t_lo, self.t_hi, points)
        with open(path, "w") as fh:
            fh.write("t,x,xprime,xsecond\n")
            for t in ts:
                fh.write(f"{t:.12g},{self.value(t, 0):.12g},"
                         f"{self.value(t, 1):.12g},"
                         f"{self.value(t, 2):.12g}\n")


def prolonged_flow(gen: Generator, jets, delta, spec: NdeSpec, rho=None,
                   substeps=48):
    """Flow jet points (t, x, x', x'') with the generator extended to the
    first and second derivative coefficients, so the image of a curve
    carries its derivatives exactly (no numerical differentiation).

    The extension of an x-affine pair omega = beta(t),
    upsilon = gamma(t) x + rho(t) transports
        x'  by gamma' x + rho' + (gamma - beta') x'
        x'' by gamma'' x + rho'' + (2 gamma' - beta'') x' +
             (gamma - 2 beta') x''.
    """
    beta, gamma, rho_chain = _affine_chains(gen, spec, rho)
    n = max(int(substeps), 1)
    h = delta / n

    def vel(state):
        t, x, x1, x2 = state
        b0, b1v, b2v = beta[0](t), beta[1](t), beta[2](t)
        g0, g1v, g2v = gamma[0](t), gamma[1](t), gamma[2](t)
        r1v, r2v = rho_chain[1](t), rho_chain[2](t)
        return np.array([
            b0,
            g0 * x + rho_chain[0](t),
            g1v * x + r1v + (g0 - b1v) * x1,
            g2v * x + r2v + (2 * g1v - b2v) * x1 + (g0 - 2 * b1v) * x2,
        ])

    out = []
    for jet in jets:
        y = np.array([float(v) for v in jet])
        try:
            for _ in range(n):
                k1 = vel(y)
                k2 = vel(y + h / 2 * k1)
                k3 = vel(y + h / 2 * k2)
                k4 = vel(y + h * k3)
                y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(y)):
                out.append(None)
            else:
                out.append(tuple(float(v) for v in y))
        except (EvalError, ExprError, OverflowError):
            out.append(None)
    return out


def transform_solution(traj: Trajectory, gen: Generator, delta,
                       spec: NdeSpec, rho=None, fine=2,
                       substeps=48) -> TransformedCurve:
    """Carry the solution curve through the prolonged flow and resample the
    image as a function of the transformed time.

    Source samples sit on nodes and midpoints, where the dense output is at
    its most accurate; the image splines only interpolate transported
    values, they are never differentiated.
    """
    from scipy.interpolate import CubicSpline

    step = traj.hstep / fine
    count = int(round((traj.t_end - (traj.t0 - traj.r)) / step))
    ts = (traj.t0 - traj.r) + step * np.arange(count + 1)
    jets = [(t, traj.value(t, 0), traj.value(t, 1), traj.value(t, 2))
            for t in ts]
    moved = prolonged_flow(gen, jets, delta, spec, rho, substeps)
    if any(m is None for m in moved):
        raise ExprError("flow left the numeric domain for some points")
    tbar = np.array([m[0] for m in moved])
    if not np.all(np.diff(tbar) > 0):
        raise ExprError("transformed time is not strictly increasing; the "
                        "image is no longer a graph")

    # the acceleration is two-sided at the breaking points: default jets
    # carry the right-hand value, so segments closing at a cut get their
    # last datum from a separately transported left-hand jet
    breaks = set()
    for bp in traj.breaking_points():
        idx = int(round((bp - ts[0]) / step))
        if 0 < idx < len(ts) - 1 and abs(ts[idx] - bp) < 1e-9:
            breaks.add(idx)
    moved_left = {}
    for idx in sorted(breaks):
        t_cut = float(ts[idx])
        left_jet = (t_cut, traj.value(t_cut, 0), traj.value(t_cut, 1),
                    traj.value(t_cut, 2, side="-"))
        m = prolonged_flow(gen, [left_jet], delta, spec, rho, substeps)[0]
        if m is None:
            raise ExprError("flow left the numeric domain for some points")
        moved_left[idx] = m
    cuts = [0] + sorted(breaks) + [len(ts) - 1]
    segments = []
    for lo_i, hi_i in zip(cuts[:-1], cuts[1:]):
        if hi_i - lo_i < 3:
            continue
        seg_moved = list(moved[lo_i:hi_i + 1])
        if hi_i in moved_left:
            seg_moved[-1] = moved_left[hi_i]
        seg_t = np.array([m[0] for m in seg_moved])
        splines = tuple(
            CubicSpline(seg_t, np.array([m[i] for m in seg_moved]))
            for i in (1, 2, 3))
        segments.append((float(seg_t[0]), float(seg_t[-1]), splines))
    boundaries = np.array([tbar[i] for i in cuts])
    return TransformedCurve(boundaries, segments, float(tbar[0]),
                            float(tbar[-1]))


@dataclass
class InvarianceReport:
    generator: str
    infinitesimal_residual: float | None = None
    finite_residual: float | None = None
    transformed_monotone: bool = True
    deltas: list = field(default_factory=list)
    per_delta: dict = field(default_factory=dict)

    def to_json(self):
        out = {"generator": self.generator,
               "transformed_monotone": self.transformed_monotone}
        if self.infinitesimal_residual is not None:
            out["infinitesimal_residual"] = self.infinitesimal_residual
        if self.finite_residual is not None:
            out["finite_residual"] = self.finite_residual
        if self.deltas:
            out["deltas"] = list(self.deltas)
            out["per_delta"] = {str(k): v
                                for k, v in self.per_delta.items()}
        return out


def _affine_chains(gen: Generator, spec: NdeSpec, rho):
    """beta/gamma/rho derivative chains for the affine residual; every
    taxonomy generator is affine in x."""
    if gen.kind == "numeric":
        # a numeric time-like generator carries no solution slot
        sol = gen.omega_numeric
        beta = [lambda t, o=o: sol.value(t, o) for o in range(4)]
        gamma = [lambda t, o=o: 0.5 * sol.value(t, o + 1) for o in range(3)]
        return beta, gamma, [lambda t: 0.0] * 4
    rho_chain = _rho_chain(rho)
    table = spec.fn_table()
    table["rho"] = rho_chain
    w = gen.omega if gen.omega is not None else ZERO
    u = gen.upsilon if gen.upsilon is not None else ZERO
    from .symexpr import X, substitute

    gamma_expr = diff(u, X)
    if diff(gamma_expr, X) != ZERO or diff(w, X) != ZERO:
        raise ExprError("infinitesimal check covers pairs affine in x")
    rho_expr = normalize(substitute(u, {X: ZERO}))
    betas = [normalize(w)]
    gammas = [normalize(gamma_expr)]
    rhos = [rho_expr]
    for _ in range(3):
        betas.append(diff(betas[-1], T))
        gammas.append(diff(gammas[-1], T))
        rhos.append(diff(rhos[-1], T))
    env = {"r": spec.r}

    def chain(exprs):
        compiled = [compile_numeric(e) for e in exprs]
        return [lambda t, f=f: f({**env, "t": t}, table) for f in compiled]

    return chain(betas), chain(gammas), chain(rhos)


def _affine_residual_fn(spec: NdeSpec):
    cached = getattr(spec, "_affine_residual", None)
    if cached is None:
        res = invariance_residual(spec, reduced_ansatz())
        cached = compile_numeric(res)
        spec._affine_residual = cached
    return cached


def infinitesimal_check(traj: Trajectory, gen: Generator, spec: NdeSpec,
                        samples, rho=None) -> float:
    """Max |invariance residual| along the solution, all jet values read
    from dense output."""
    beta, gamma, rho_chain = _affine_chains(gen, spec, rho)
    table = spec.fn_table()
    table.update({"beta": beta, "gamma": gamma, "rho": rho_chain})
    res_fn = _affine_residual_fn(spec)
    worst = 0.0
    for t in samples:
        t = float(t)
        td = t - spec.r
        if td < traj.t0 - traj.r - 1e-9:
            raise ExprError(f"sample {t} reaches before the span")
        env = {"t": t, "r": spec.r,
               "x": traj.value(t, 0), "xr": traj.value(td, 0),
               "x1": traj.value(t, 1), "x1r": traj.value(td, 1),
               "x2r": traj.value(td, 2)}
        worst = max(worst, abs(res_fn(env, table)))
    return worst


def finite_check(traj: Trajectory, gen: Generator, spec: NdeSpec,
                 delta_grid, rho=None, fine=2, substeps=48,
                 samples_per_delta=40) -> InvarianceReport:
    """Residual of the transformed curve against the equation for each
    group parameter, sampling away from the span ends and the images of
    the derivative-breaking points."""
    report = InvarianceReport(generator=gen.label,
                              deltas=[float(d) for d in delta_grid])
    h = traj.hstep
    worst_all = None
    for delta in delta_grid:
        try:
            curve = transform_solution(traj, gen, float(delta), spec, rho,
                                       fine, substeps)
        except ExprError as err:
            report.transformed_monotone = False
            report.per_delta[float(delta)] = f"failed: {err}"
            continue
        breaks = flow(gen, [(t, traj.value(t, 0))
                            for t in traj.breaking_points()],
                      float(delta), spec, rho, substeps)
        break_images = [m[0] for m in breaks if m is not None]
        lo = curve.t_lo + spec.r + h
        hi = curve.t_hi - h
        cand = np.linspace(lo, hi, samples_per_delta)
        worst = 0.0
        used = 0
        for t in cand:
            if any(abs(t - bi) < h / 2 or abs(t - spec.r - bi) < h / 2
                   for bi in break_images):
                continue
            v = (curve.value(t, 2)
                 + spec.a.eval(t) * curve.value(t, 1)
                 + spec.b.eval(t) * curve.value(t - spec.r, 1)
                 + spec.c.eval(t) * curve.value(t, 0)
                 + spec.d.eval(t) * curve.value(t - spec.r, 0)
                 + spec.k.eval(t) * curve.value(t - spec.r, 2)
                 - spec.h.eval(t))
            worst = max(worst, abs(v))
            used += 1
        report.per_delta[float(delta)] = worst
        if used == 0:
            report.per_delta[float(delta)] = "no admissible samples"
        elif worst_all is None or worst > worst_all:
            worst_all = worst
    report.finite_residual = worst_all
    return report


# ---------------------------------------------------------------------------
# group axioms


def identity_error(gen: Generator, points, spec: NdeSpec, rho=None):
    moved = flow(gen, points, 0.0, spec, rho, substeps=1)
    return max(max(abs(m[0] - p[0]), abs(m[1] - p[1]))
               for m, p in zip(moved, points))


def inverse_error(gen: Generator, points, delta, spec: NdeSpec, rho=None,
                  substeps=64):
    fwd = flow(gen, points, delta, spec, rho, substeps)
    back = flow(gen, [m for m in fwd if m is not None], -delta, spec, rho,
                substeps)
    return max(max(abs(b[0] - p[0]), abs(b[1] - p[1]))
               for b, p in zip(back, points))


def closure_error(gen: Generator, points, d1, d2, spec: NdeSpec, rho=None,
                  substeps=64):
    step1 = flow(gen, points, d1, spec, rho, substeps)
    two = flow(gen, step1, d2, spec, rho, substeps)
    direct = flow(gen, points, d1 + d2, spec, rho, substeps)
    return max(max(abs(a[0] - b[0]), abs(a[1] - b[1]))
               for a, b in zip(two, direct))
