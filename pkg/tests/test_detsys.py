import math
from fractions import Fraction

import numpy as np
import pytest

from ndelie.detsys import (
    Assumption, FunctionalConstraint, apply_delay_equalities,
    canonical_constraints, catalog, determine, generic_ansatz,
    invariance_residual, is_zero, linear_antiderivative, match_catalog,
    product_antiderivative, reduce_ansatz, reduced_ansatz, split,
    verify_first_integral,
)
from ndelie.equation import CoeffDescriptor as CD, NdeSpec
from ndelie.prolong import InfinitesimalAnsatz
from ndelie.symexpr import (
    Par, T, X, X1, X1R, X2R, XR, ZERO, app, compile_numeric, diff,
    equivalent, eval_numeric, fn, normalize, num, parse, shift,
)


def generic_spec():
    return NdeSpec.make(b=CD.closed(fn("b")), c=CD.closed(fn("c")),
                        d=CD.closed(fn("d")), k=CD.closed(fn("k")), r=1.0)


# ---------------------------------------------------------------------------
# residual generation


def test_residual_requires_reduced_form():
    spec = NdeSpec.make(a=1, k=1, r=1.0)
    with pytest.raises(Exception):
        invariance_residual(spec, reduced_ansatz())


def test_cubic_delayed_velocity_row():
    sys0 = determine(generic_spec())
    row = sys0.find(X1R ** 3)
    w_xx = diff(diff(generic_ansatz().omega, X), X)
    assert equivalent(row.residual, -(fn("k") * shift(w_xx)))


def test_neutral_sin_residual():
    # b = c = d = 0, k = 1 with upsilon = sin t
    spec = NdeSpec.make(k=1, r=1.0)
    a = InfinitesimalAnsatz(ZERO, app("sin", T))
    res = invariance_residual(spec, a)
    assert equivalent(res, -app("sin", T) - app("sin", T - Par("r")))
    # vanishes when the delay is pi
    vals = [eval_numeric(res, {"t": t, "r": math.pi})
            for t in np.linspace(0.0, 6.0, 13)]
    assert max(abs(v) for v in vals) < 1e-12


def test_zero_ansatz_residual():
    spec = generic_spec()
    assert invariance_residual(spec, InfinitesimalAnsatz(ZERO, ZERO)) == ZERO


# ---------------------------------------------------------------------------
# split and reduce


def test_split_zero_residual():
    sys0 = split(ZERO)
    assert sys0.nontrivial() == []


def test_reduced_system_matches_catalog():
    sys1 = reduce_ansatz(determine(generic_spec()))
    cat = catalog()

    def row(monomial):
        return sys1.find(monomial).residual

    assert match_catalog(row(X), cat) == "E-x"
    assert match_catalog(row(X1), cat) == "E-x1"
    assert match_catalog(row(num(1)), cat) == "E-1"
    assert match_catalog(row(X2R), cat) == "E-x2r"
    assert match_catalog(row(XR), cat) == "E-xr"
    assert match_catalog(row(X1R), cat) == "E-x1r"


def test_reduced_system_integrations():
    sys1 = reduce_ansatz(determine(generic_spec()))
    x1 = sys1.find(X1)
    assert x1.integrated is not None
    assert match_catalog(x1.integrated) == "E-x1-int"
    x1r = sys1.find(X1R)
    assert x1r.integrated is not None
    assert match_catalog(x1r.integrated) == "E-x1r-int"


def test_reduced_system_delay_constraints():
    sys1 = reduce_ansatz(determine(generic_spec()))
    labels = [fc.label for fc in sys1.functional_constraints]
    assert "beta(t) = beta(t-r)" in labels
    assert "gamma(t) = gamma(t-r)" in labels


def test_canonical_constraints_forms():
    sys2 = canonical_constraints(reduce_ansatz(determine(generic_spec())))
    cat = catalog()
    got = {eq.catalog_id: eq.residual for eq in sys2.equations}
    assert match_catalog(got["E-omega-c"], cat) == "E-omega-c"
    assert match_catalog(got["E-omega-d"], cat) == "E-omega-d"
    # the omega pinning is the delayed-velocity first integral renamed
    assert match_catalog(got["E-omega-b"], cat) in ("E-omega-b", "E-x1r-int")
    assert match_catalog(got["E-x2r"], cat) == "E-x2r"
    # the upsilon record is the integrated velocity row renamed
    assert match_catalog(got["E-upsilon"], cat) in ("E-upsilon", "E-x1-int")


def test_nonconstant_k_forces_beta_zero():
    # with k(t) = t the branch row is beta(t) alone, so beta must vanish
    spec = NdeSpec.make(b=1, c=1, d=1, k=CD.closed(T), r=1.0)
    sys1 = reduce_ansatz(determine(spec))
    row = sys1.find(X2R)
    assert equivalent(row.residual, fn("beta"))


def test_apply_delay_equalities():
    e = fn("beta", delayed=True, order=1) - fn("beta", order=1)
    assert apply_delay_equalities(e, ("beta",)) == ZERO


# ---------------------------------------------------------------------------
# first integrals


def test_linear_antiderivative():
    e = normalize(2 * fn("gamma", order=1) - fn("beta", order=2))
    anti = linear_antiderivative(e)
    assert equivalent(anti, 2 * fn("gamma") - fn("beta", order=1))


def test_product_antiderivative():
    e = normalize(fn("b") * fn("beta", order=1)
                  + fn("b", order=1) * fn("beta"))
    anti = product_antiderivative(e)
    assert equivalent(anti, fn("b") * fn("beta"))


def test_product_antiderivative_rejects_mismatch():
    e = normalize(fn("b") * fn("beta", order=1)
                  + 2 * fn("b", order=1) * fn("beta"))
    assert product_antiderivative(e) is None


def test_omega_quadratic_first_integral():
    # the delayed-position constraint multiplied by omega integrates to
    # c2 w w'' - (c2/2) w'^2 + 2 d w^2 + c3 w'
    w = fn("omega")
    w1, w2, w3 = (fn("omega", order=i) for i in (1, 2, 3))
    c2, c3 = Par("c2"), Par("c3")
    d = fn("d")
    derivative_form = normalize(
        c2 * w * w3 + 2 * w ** 2 * fn("d", order=1) + 4 * w * w1 * d
        + c3 * w2)
    candidate = normalize(
        c2 * w * w2 - Fraction(1, 2) * c2 * w1 ** 2 + 2 * d * w ** 2
        + c3 * w1)
    assert verify_first_integral(derivative_form, candidate)


def test_omega_c_first_integral():
    # omega times the c-constraint integrates to w w'' - w'^2/2 + 2 c w^2
    w = fn("omega")
    w1, w2, w3 = (fn("omega", order=i) for i in (1, 2, 3))
    c = fn("c")
    derivative_form = normalize(
        w * w3 + 4 * c * w * w1 + 2 * fn("c", order=1) * w ** 2)
    candidate = normalize(
        w * w2 - Fraction(1, 2) * w1 ** 2 + 2 * c * w ** 2)
    assert verify_first_integral(derivative_form, candidate)


# ---------------------------------------------------------------------------
# zero test


def test_is_zero_symbolic():
    assert is_zero(ZERO).mode == "symbolic"
    assert is_zero(ZERO)


def test_is_zero_sampled_identity():
    res = is_zero(parse("sin(t)^2 + cos(t)^2 - 1"))
    assert res and res.mode == "sampled"


def test_is_zero_respects_assumptions():
    e = parse("beta(t)*k'(t)")
    assert not is_zero(e, assumptions=[Assumption("beta", "nonzero")])
    assert is_zero(e, assumptions=[Assumption("k", "constant")])
    assert is_zero(e, assumptions=[Assumption("beta", "zero")])


def test_is_zero_delay_equal_instances():
    e = fn("beta", delayed=True) - fn("beta")
    assert is_zero(e, assumptions=[Assumption("beta", "delay-equal")])
    assert not is_zero(e)


def test_functional_constraint_numeric_check():
    fc = FunctionalConstraint("b", fn("b"), fn("b", delayed=True))
    periodic = {"b": [lambda t: math.sin(2 * math.pi * t)] * 1}
    assert fc.check_numeric(periodic, r=1.0, t_lo=0.0) < 1e-9
    drifting = {"b": [lambda t: t]}
    assert fc.check_numeric(drifting, r=1.0, t_lo=0.0) > 0.5


# ---------------------------------------------------------------------------
# splitting soundness oracle: reconstruction equals the unsplit residual


def _instance(rng):
    def trig(a0, a1, w):
        return [lambda t: a0 + a1 * math.sin(w * t),
                lambda t: a1 * w * math.cos(w * t),
                lambda t: -a1 * w * w * math.sin(w * t),
                lambda t: -a1 * w ** 3 * math.cos(w * t)]

    table = {}
    for name in ("b", "c", "d", "k", "beta", "gamma", "rho",
                 "alpha", "alpha2", "gamma2"):
        table[name] = trig(rng.uniform(-1.5, 1.5), rng.uniform(-1.0, 1.0),
                           rng.uniform(0.4, 1.6))
    return table


def test_splitting_soundness_sampled():
    spec = generic_spec()
    ansatz = generic_ansatz()
    residual = invariance_residual(spec, ansatz)
    sys0 = split(residual, spec, ansatz)
    res_fn = compile_numeric(residual)
    rows = [(compile_numeric(eq.monomial), compile_numeric(eq.residual))
            for eq in sys0.equations]

    rng = np.random.RandomState(7)
    jets = ("x", "xr", "x1", "x1r", "x2", "x2r")
    worst = 0.0
    for _ in range(25):
        table = _instance(rng)
        for _ in range(25):
            env = {"t": rng.uniform(0.1, 4.0), "r": rng.uniform(0.5, 2.0)}
            for j in jets:
                env[j] = rng.uniform(-2.0, 2.0)
            direct = res_fn(env, table)
            recon = math.fsum(m(env, table) * c(env, table)
                              for m, c in rows)
            scale = max(1.0, abs(direct))
            worst = max(worst, abs(direct - recon) / scale)
    assert worst < 1e-10


# ---------------------------------------------------------------------------
# completeness: the classical system makes the residual vanish


def test_reduced_system_is_complete():
    """With the affine pair, the delay equalities, and every split row
    imposed through closed-form instances, the sampled residual vanishes
    to roundoff."""
    spec = generic_spec()
    residual = invariance_residual(spec, reduced_ansatz())
    r = 1.0
    kconst = Fraction(13, 10)
    c1v, c3v, c5v, c6v = 0.8, Fraction(7, 10), Fraction(1), Fraction(1)

    # b periodic in r and nonvanishing, so beta = c3/b is delay-equal
    two_pi = 2 * math.pi
    b_table = [
        lambda t: 2.0 + 0.3 * math.sin(two_pi * t),
        lambda t: 0.3 * two_pi * math.cos(two_pi * t),
        lambda t: -0.3 * two_pi ** 2 * math.sin(two_pi * t),
        lambda t: -0.3 * two_pi ** 3 * math.cos(two_pi * t),
    ]

    b = fn("b")
    b1, b2 = fn("b", order=1), fn("b", order=2)
    half = num(Fraction(1, 2))
    beta_expr = normalize(num(c3v) * b ** -1)
    gamma_expr = normalize(half * (diff(beta_expr, T) + Par("c1")))
    # closed forms satisfying the third-order and delayed-position rows
    c_expr = normalize(half * (b2 * b ** -1
                               - num(Fraction(3, 2)) * b1 ** 2 * b ** -2
                               + half * num(c6v) * b ** 2))
    d_expr = normalize(half * (num(c5v) * b ** 2 + b1
                               + num(kconst) * (b2 * b ** -1
                               - num(Fraction(3, 2)) * b1 ** 2 * b ** -2)))

    def chain(expr, orders=2):
        exprs = [expr]
        for _ in range(orders):
            exprs.append(diff(exprs[-1], T))
        compiled = [compile_numeric(e) for e in exprs]
        return [lambda t, f=f: f({"t": t, "c1": c1v}, {"b": b_table})
                for f in compiled]

    table = {
        "b": b_table,
        "k": [lambda t: float(kconst)] + [lambda t: 0.0] * 3,
        "beta": chain(beta_expr, 3),
        "gamma": chain(gamma_expr, 2),
        "rho": [lambda t: 0.0] * 4,
        "c": chain(c_expr, 1),
        "d": chain(d_expr, 1),
    }
    res_fn = compile_numeric(residual)
    rng = np.random.RandomState(3)
    worst = 0.0
    for _ in range(40):
        env = {"t": rng.uniform(0.1, 4.0), "r": r, "c1": c1v}
        for j in ("x", "xr", "x1", "x1r", "x2r"):
            env[j] = rng.uniform(-2.0, 2.0)
        worst = max(worst, abs(res_fn(env, table)))
    assert worst < 1e-9
