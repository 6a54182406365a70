import math

import numpy as np
import pytest

from ndelie.classify import Generator, classify
from ndelie.equation import NdeSpec
from ndelie.flowverify import (
    closure_error, finite_check, flow, identity_error, infinitesimal_check,
    inverse_error, transform_solution,
)
from ndelie.ndesolve import integrate, solve_homogeneous_slot
from ndelie.symexpr import T, X, ZERO, app, fn, normalize, num


def example1():
    spec = NdeSpec.make(k=1, r=math.pi)
    traj = integrate(spec, "sin(t)", 3 * math.pi, 64)
    rho = solve_homogeneous_slot(spec, "sin(t)", 3 * math.pi, 64)
    return spec, traj, rho


SPEC1, TRAJ1, RHO1 = example1()
GEN_T = Generator("d/dt", "closed", omega=num(1), upsilon=ZERO)
GEN_SCALE = Generator("x d/dx", "closed", omega=ZERO, upsilon=X)
GEN_RHO = Generator("rho d/dx", "parametric", omega=ZERO, upsilon=fn("rho"))
GEN_BOGUS = Generator("t x d/dx", "closed", omega=ZERO,
                      upsilon=normalize(T * X))
POINTS = [(0.5, 0.3), (2.0, -1.0), (4.0, 0.8), (7.0, 0.1)]


# ---------------------------------------------------------------------------
# flows


def test_flow_identity_at_zero():
    assert identity_error(GEN_SCALE, POINTS, SPEC1) <= 1e-12


def test_flow_scaling_closed_form():
    moved = flow(GEN_SCALE, POINTS, 0.7, SPEC1)
    for (t, x), m in zip(POINTS, moved):
        assert m[0] == pytest.approx(t, abs=1e-12)
        assert m[1] == pytest.approx(x * math.exp(0.7), rel=1e-10)


def test_flow_group_axioms():
    for gen in (GEN_T, GEN_SCALE):
        assert identity_error(gen, POINTS, SPEC1) <= 1e-12
        assert inverse_error(gen, POINTS, 0.4, SPEC1) < 1e-7
        assert closure_error(gen, POINTS, 0.3, 0.4, SPEC1) < 1e-7


def test_flow_marks_escaping_points():
    # dx/d(delta) = exp(x) escapes to infinity in finite group time
    gen = Generator("exp(x) d/dx", "closed", omega=ZERO,
                    upsilon=app("exp", X))
    moved = flow(gen, [(0.0, 0.0), (0.0, -5.0)], 2.0, SPEC1, substeps=64)
    assert moved[0] is None
    assert moved[1] is not None


def test_printed_example_group_closure_and_generator():
    """The printed finite transformations of the pure-neutral example form
    a genuine one-parameter group, but their generator carries an extra
    cosine solution slot: the flow matches after that correction."""
    c1 = c38 = 1.0

    def printed(t, x, delta):
        tb = t + c38 * delta
        xb = (2 / c1) * (math.exp(c1 * delta / 2) * (c1 * x / 2
                                                     + math.sin(t))
                         - math.sin(t + c38 * delta))
        return tb, xb

    # closure of the printed map itself
    t, x, d = 0.7, 0.4, 0.3
    t1, x1 = printed(t, x, d)
    assert printed(t1, x1, d) == pytest.approx(printed(t, x, 2 * d),
                                               abs=1e-12)

    corrected = Generator(
        "group generator of the printed map", "closed", omega=num(1),
        upsilon=normalize(X / 2 + app("sin", T) - 2 * app("cos", T)))
    for delta in (-1.0, -0.5, 0.1, 0.5, 1.0):
        moved = flow(corrected, POINTS, delta, SPEC1, substeps=64)
        worst = max(
            max(abs(m[0] - printed(p[0], p[1], delta)[0]),
                abs(m[1] - printed(p[0], p[1], delta)[1]))
            for m, p in zip(moved, POINTS))
        assert worst < 1e-8

    # the literally stated pair is not the generator of the printed map
    stated = Generator("stated pair", "closed", omega=num(1),
                       upsilon=normalize(X / 2 + app("sin", T)))
    moved = flow(stated, POINTS, 0.5, SPEC1, substeps=64)
    worst = max(abs(m[1] - printed(p[0], p[1], 0.5)[1])
                for m, p in zip(moved, POINTS))
    assert worst > 1e-2


# ---------------------------------------------------------------------------
# transformed solutions


def test_transform_solution_scaling():
    curve = transform_solution(TRAJ1, GEN_SCALE, 0.5, SPEC1)
    for t in np.linspace(0.5, 8.0, 30):
        assert curve.value(t, 0) == pytest.approx(
            math.exp(0.5) * math.sin(t), abs=1e-6)


def test_transform_solution_rho_slot():
    # x -> x + delta sin t stays a solution; with x = sin t the image is
    # 1.5 sin t
    curve = transform_solution(TRAJ1, GEN_RHO, 0.5, SPEC1, rho=RHO1)
    for t in np.linspace(0.5, 8.0, 30):
        assert curve.value(t, 0) == pytest.approx(1.5 * math.sin(t),
                                                  abs=1e-6)


def test_transform_solution_time_translation():
    curve = transform_solution(TRAJ1, GEN_T, 0.4, SPEC1)
    for t in np.linspace(1.0, 8.0, 30):
        assert curve.value(t, 0) == pytest.approx(math.sin(t - 0.4),
                                                  abs=1e-6)


def test_transform_solution_identity():
    curve = transform_solution(TRAJ1, GEN_SCALE, 0.0, SPEC1)
    for t in np.linspace(0.0, 8.0, 20):
        assert curve.value(t, 0) == pytest.approx(TRAJ1.value(t, 0),
                                                  abs=1e-9)


# ---------------------------------------------------------------------------
# invariance checks


def test_infinitesimal_check_example_generators():
    samples = np.linspace(0.4, 2.8 * math.pi, 40)
    assert infinitesimal_check(TRAJ1, GEN_T, SPEC1, samples) < 1e-6
    assert infinitesimal_check(TRAJ1, GEN_SCALE, SPEC1, samples) < 1e-6
    assert infinitesimal_check(TRAJ1, GEN_RHO, SPEC1, samples,
                               rho=RHO1) < 1e-6


def test_infinitesimal_check_negative_control():
    samples = np.linspace(0.4, 2.8 * math.pi, 40)
    assert infinitesimal_check(TRAJ1, GEN_BOGUS, SPEC1, samples) > 1e-2


def test_infinitesimal_check_second_example():
    spec = NdeSpec.make(c=-1, d=1, r=1.0)
    traj = integrate(spec, "sin(t) + 2", 4.0, 64)
    samples = np.linspace(1.2, 3.8, 30)
    assert infinitesimal_check(traj, GEN_SCALE, spec, samples) < 1e-6


def test_finite_check_passes_for_symmetries():
    rep = finite_check(TRAJ1, GEN_T, SPEC1, [0.25, -0.25, 0.5])
    assert rep.finite_residual < 1e-5
    rep = finite_check(TRAJ1, GEN_SCALE, SPEC1, [1.0])
    assert rep.finite_residual < 1e-5


def test_finite_check_negative_control():
    rep = finite_check(TRAJ1, GEN_BOGUS, SPEC1, [0.2])
    assert rep.finite_residual > 1e-2


def test_finite_check_rho_generator():
    rep = finite_check(TRAJ1, GEN_RHO, SPEC1, [0.25], rho=RHO1)
    assert rep.finite_residual < 1e-5


def test_classified_generators_verify_end_to_end():
    res = classify(SPEC1)
    samples = np.linspace(0.4, 2.8 * math.pi, 30)
    for gen in res.admitted:
        assert infinitesimal_check(TRAJ1, gen, SPEC1, samples,
                                   rho=RHO1) < 1e-6
        rep = finite_check(TRAJ1, gen, SPEC1, [0.25], rho=RHO1)
        assert rep.finite_residual < 1e-4
