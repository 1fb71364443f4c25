from __future__ import annotations

import math
from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from msgamma.classes import GradedClass, gamma_of_quotient, gamma_one_plus, grading_operator, rgamma_shift
from msgamma.series import (
    NefError,
    TruncationError,
    degrade_eval,
    eval_J,
    gamma_I_direction,
    gamma_I_truncation,
    i_function,
    rhs_anticanonical,
    rhs_generalized,
    rhs_hcI_series,
    rhs_hcI_series_mult,
    rhs_local_charge,
    rhs_ms_gamma,
    toric_j_coefficients,
)
from msgamma.toric import CurveClass

from conftest import NAMES, gamma, jexp, ring


def _exact_factor(D, m, z, r):
    """Givental factor for one divisor at an explicit rational z, built from scratch."""
    out = r.one()
    if m >= 0:
        for k in range(1, m + 1):
            # 1/(D + k z) = sum_a (-D)^a / (k z)^(a+1)
            inv = r.zero()
            p = r.one()
            for a in range(r.dim + 1):
                inv = r.add(inv, r.scale(p, Fraction((-1) ** a) / (k * z) ** (a + 1)))
                p = r.mul(p, D)
            out = r.mul(out, inv)
    else:
        for k in range(m + 1, 1):
            lin = list(D)
            lin[0] += k * z
            out = r.mul(out, lin)
    return out


@pytest.mark.parametrize("name", NAMES)
def test_homogeneity_exact(name):
    """J_d(z) in degree p equals z^(-c1.d - p) times J_d(1), in exact arithmetic."""
    r = ring(name)
    J = jexp(name, 9)
    for z in (Fraction(2), Fraction(-3, 7)):
        for d, coeffs in zip(J.classes, J.exact):
            val = r.one()
            for j, m in enumerate(d.pairing):
                val = r.mul(val, _exact_factor(list(r.divisor_classes[j]), m, z, r))
            scaled = [c * z ** (-d.degree - p) for c, p in zip(coeffs, r.degrees)]
            assert val == scaled


def test_i_function_section_symbolic_p1():
    r = ring("p1")
    J = jexp("p1", 4)
    I = i_function(J, [r.c1], "section")
    H, z = sympy.symbols("H z")
    expr = (2 * H + z) * (2 * H + 2 * z) / (H + z) ** 2
    ser = sympy.series(expr, H, 0, 2).removeO()
    idx = J.classes.index(CurveClass((1, 1)))
    for p in range(2):
        ref = sympy.simplify(ser.coeff(H, p))
        got = I.exact[idx][p] * z ** (-I.weights[idx] - p)
        assert sympy.simplify(ref - got) == 0
    assert I.exact[idx] == [2, 2]


def test_i_function_trivial_cases():
    r = ring("p2")
    J = jexp("p2", 6)
    assert i_function(J, [], "section").exact == J.exact
    I = i_function(J, [r.c1], "total")
    assert I.exact[0] == r.one()
    with pytest.raises(NefError):
        i_function(J, [[-x for x in r.c1]], "section")


def test_eval_J_p1_bessel():
    mp.mp.dps = 30
    J = jexp("p1", 40)
    val, rep = eval_J(J, None, 1.0)
    assert abs(val.coeffs[0] - float(mp.besseli(0, 2))) < 1e-14
    assert not rep.limited


def test_degrade_eval_matches_rescaled_eval():
    r = ring("p1")
    J = jexp("p1", 40)
    t = 2.0
    a = degrade_eval(J, None, t)
    b, _ = eval_J(J, None, -1 / t)
    b = grading_operator(b, 1 / t, GradedClass.first_chern(r))
    np.testing.assert_allclose(a.coeffs, b.coeffs, rtol=1e-12)


def test_degrade_eval_trivial_cases():
    r = ring("p2")
    J = jexp("p2", 12)
    a = degrade_eval(J, None, 1.0)
    b, _ = eval_J(J, None, -1.0)
    np.testing.assert_allclose(a.coeffs, b.coeffs, rtol=1e-13)
    a = degrade_eval(J, None, 3.0, N=0)
    ref = (GradedClass.first_chern(r) * -math.log(3)).exp()
    np.testing.assert_allclose(a.coeffs, ref.coeffs, rtol=1e-14)


@pytest.mark.parametrize("z", [0.5, 1.0, 2.0])
def test_ms_gamma_p1_bessel(z):
    v, rep = rhs_ms_gamma(ring("p1"), jexp("p1", 40), gamma("p1"), None, z)
    # alternating cancellation among terms of size ~ e^(4/z) costs that much precision
    ref = float(2 * mp.besselk(0, 2 / z))
    assert abs(v - ref) < 1e-15 * math.exp(4 / z) * abs(ref)
    assert not rep.limited


def test_ms_gamma_p2_large_z_leading_term():
    eg = float(mp.euler)
    errs = []
    for z in (100.0, 1000.0):
        v, _ = rhs_ms_gamma(ring("p2"), jexp("p2", 8), gamma("p2"), None, z)
        L = 3 * math.log(z)
        lead = L ** 2 / 2 - 3 * eg * L + 4.5 * eg ** 2 + math.pi ** 2 / 4
        errs.append(abs(v.real / lead - 1))
    assert errs[1] < errs[0] < 1e-4


def test_truncation_flag_p2_small_degree():
    # degrees c1.d <= 12 only reach curve degree 4, not enough at z <= 1
    for z in (0.5, 1.0):
        _, rep = rhs_ms_gamma(ring("p2"), jexp("p2", 36), gamma("p2"), None, z, N=12, tol=1e-5)
        assert rep.limited
        _, rep = rhs_ms_gamma(ring("p2"), jexp("p2", 36), gamma("p2"), None, z, tol=1e-5)
        assert not rep.limited


@pytest.mark.parametrize("s", [5.0, 10.0, 20.0])
def test_local_charge_p1_closed_form(s):
    v, rep = rhs_local_charge(ring("p1"), jexp("p1", 40), None, s)
    ref = 2j * math.pi * 2 * float(mp.acosh(s / 2))
    assert abs(v - ref) < 1e-7 * abs(ref)
    assert abs(v.real) < 1e-12 * abs(v)


@pytest.mark.parametrize("s", [10.0, 30.0])
def test_anticanonical_p1_closed_form(s):
    v, _ = rhs_anticanonical(ring("p1"), jexp("p1", 40), gamma("p1"), None, s)
    assert abs(v - 2 * s / math.sqrt(s * s - 4)) < 1e-10


def test_hcI_series_p1_closed_form_and_divergence():
    v, rep = rhs_hcI_series(ring("p1"), jexp("p1", 40), None, -10.0)
    ref = math.log((5 + math.sqrt(24)) / (5 - math.sqrt(24))) / (2 * math.sqrt(24))
    assert abs(v - ref) < 1e-13
    assert not rep.limited
    # inside |s| < T the series diverges and the tail check says so
    _, rep = rhs_hcI_series(ring("p1"), jexp("p1", 40), None, -1.0, tol=1e-6)
    assert rep.limited


def _volume_series(name, s, N):
    """2 pi i sum_d int J_d(-1) s^(c1 - m) Gamma_F / Gamma(1 + c1 - m)."""
    r, J = ring(name), jexp(name, N)
    c1 = GradedClass.first_chern(r)
    total = 0
    for d, coeffs in zip(J.classes, J.exact):
        m = d.degree
        Jd = GradedClass(r, np.array([float(c) * (-1.0) ** (-m - p) for c, p in zip(coeffs, r.degrees)]))
        pw = (c1 * math.log(s)).exp() * s ** (-m)
        total += (Jd * pw * gamma(name) * rgamma_shift(c1, m)).integrate()
    return 2j * math.pi * total


def _laplace_series(name, s, N):
    """sum_d int J_d(-1) |s|^(c1 - m - 1) Gamma(1 + m - c1) Gamma_F."""
    r, J = ring(name), jexp(name, N)
    c1 = GradedClass.first_chern(r)
    total = 0
    for d, coeffs in zip(J.classes, J.exact):
        m = d.degree
        Jd = GradedClass(r, np.array([float(c) * (-1.0) ** (-m - p) for c, p in zip(coeffs, r.degrees)]))
        pw = (c1 * math.log(abs(s))).exp() * abs(s) ** (-m - 1)
        total += (Jd * pw * gamma(name) * rgamma_shift(-c1, -m).inverse()).integrate()
    return total


@pytest.mark.parametrize("name", ["p2", "p1xp1", "blp2"])
def test_local_charge_matches_reduced_form(name):
    v, _ = rhs_local_charge(ring(name), jexp(name, 24), None, 20.0)
    ref = _volume_series(name, 20.0, 24)
    assert abs(v - ref) < 1e-12 * abs(ref)


@pytest.mark.parametrize("name", ["p2", "p1xp1", "blp2"])
def test_hcI_matches_reduced_form(name):
    v, _ = rhs_hcI_series(ring(name), jexp(name, 24), None, -20.0)
    ref = _laplace_series(name, -20.0, 24)
    assert abs(v - ref) < 1e-12 * abs(ref)


@pytest.mark.parametrize("name", ["p1", "p2", "p1xp1"])
def test_anticanonical_is_derivative_of_local(name):
    r, J = ring(name), jexp(name, 30)
    s, h = 30.0, 0.03
    f = [rhs_local_charge(r, J, None, s + k * h)[0] for k in (-2, -1, 1, 2)]
    deriv = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h)
    ac, _ = rhs_anticanonical(r, J, gamma(name), None, s)
    assert abs(2j * math.pi / s * ac - deriv) < 1e-8 * abs(deriv)


def test_generalized_reductions():
    r, J = ring("p2"), jexp("p2", 30)
    g = gamma("p2")
    a, _ = rhs_generalized(r, J, None, [], [], 0.7)
    b, _ = rhs_ms_gamma(r, J, g, None, 0.7)
    assert abs(a - b) < 1e-14 * abs(b)
    a, _ = rhs_generalized(r, J, None, [r.c1], [20.0], 1.0, side="total")
    b, _ = rhs_local_charge(r, J, None, 20.0)
    assert abs(a - b) < 1e-13 * abs(b)
    a, _ = rhs_generalized(r, J, None, [r.c1], [20.0], 1.0, side="section")
    b, _ = rhs_anticanonical(r, J, g, None, 20.0)
    assert abs(a - b) < 1e-13 * abs(b)
    a, _ = rhs_hcI_series_mult(r, J, None, [r.c1], [-20.0], 1.0)
    b, _ = rhs_hcI_series(r, J, None, -20.0)
    assert abs(a - b) < 1e-13 * abs(b)


def test_generalized_p1xp1_factor_closed_form():
    r, J = ring("p1xp1"), jexp("p1xp1", 40)
    v = [r.divisor_sum([1, 1, 0, 0])]
    for s, z in [(20.0, 1.0), (6.0, 0.7)]:
        got, _ = rhs_generalized(r, J, None, v, [s], z)
        ref = s * 2 / math.sqrt(s * s - 4) * float(2 * mp.besselk(0, 2 / z))
        assert abs(got - ref) < 1e-10 * ref


def test_generalized_p2_hyperplane_closed_form():
    # v1 = H: the section is a line with two leftover terms, giving 2 K0(2 / (z sqrt(s)))
    r, J = ring("p2"), jexp("p2", 36)
    got, _ = rhs_generalized(r, J, None, [r.divisor_classes[0]], [20.0], 1.0)
    assert abs(got - float(2 * mp.besselk(0, 2 / math.sqrt(20)))) < 1e-12


def test_laplace_of_monomial_termwise():
    """int_0^inf e^{-a r} r^{x+k} dr = Gamma(1+x+k) a^{-1-x-k} for nilpotent x."""
    r = ring("p2")
    x = GradedClass.first_chern(r)
    for a in (2.0, 10.0):
        for k in (0, 1, 3):
            lhs = GradedClass.zero(r)
            power = GradedClass.one(r)
            for p in range(r.dim + 1):
                if p:
                    power = power * x / p
                mom, _ = quad(lambda u: math.exp(-a * u) * u ** k * math.log(u) ** p, 0, np.inf,
                              epsabs=1e-14, epsrel=1e-13, limit=200)
                lhs = lhs + power * mom
            rhs = rgamma_shift(x, -k).inverse() * (x * -math.log(a)).exp() * a ** (-1 - k)
            np.testing.assert_allclose(lhs.coeffs, rhs.coeffs, rtol=1e-10, atol=1e-12)


def test_gamma_I_p1_against_independent_sum():
    mp.mp.dps = 50
    r = ring("p1")
    for t in (1.0, 3.0):
        J = gamma_I_truncation(r, t)
        _, _, ang = gamma_I_direction(J, t)
        A = mp.mpf(0)
        B = mp.mpf(0)
        for d in range(200):
            w = mp.mpf(t) ** (2 * d) / mp.factorial(d) ** 2
            A += w
            B += -2 * mp.harmonic(d) * w
        B += 2 * mp.log(t) * A
        u = mp.matrix([A, B]) / mp.sqrt(A ** 2 + B ** 2)
        g = mp.matrix([1, -2 * mp.euler]) / mp.sqrt(1 + 4 * mp.euler ** 2)
        ref = float(mp.acos(abs(u[0] * g[0] + u[1] * g[1])))
        assert abs(ang - ref) < 1e-10 * ref


def test_gamma_I_truncation_guard():
    J = toric_j_coefficients(ring("p2"), 12)
    with pytest.raises(TruncationError):
        gamma_I_direction(J, 10.0)


@settings(max_examples=15, deadline=None)
@given(t1=st.floats(2, 20), dt=st.floats(1, 20))
def test_gamma_I_angle_decreases(t1, dt):
    r = ring("p2")
    angles = []
    for t in (t1, t1 + dt):
        J = gamma_I_truncation(r, t)
        angles.append(gamma_I_direction(J, t)[2])
    assert angles[1] < angles[0]


def test_eval_J_p1_minus_one_harmonic_sums():
    J = jexp("p1", 40)
    val, _ = eval_J(J, None, -1.0, N=20)
    fac = [math.factorial(d) ** 2 for d in range(11)]
    harm = [sum(1 / k for k in range(1, d + 1)) for d in range(11)]
    assert abs(val.coeffs[0] - sum(1 / f for f in fac)) < 1e-15
    assert abs(val.coeffs[1] - sum(2 * h / f for h, f in zip(harm, fac))) < 1e-15


def test_eval_J_p1_log_t_brute_force():
    r = ring("p1")
    t = 2.0
    tau = GradedClass.first_chern(r) * math.log(t)
    val, _ = eval_J(jexp("p1", 40), tau, 1.0)
    A = sum(Fraction(2 ** (2 * d), math.factorial(d) ** 2) for d in range(21))
    B = sum(Fraction(2 ** (2 * d), math.factorial(d) ** 2) * -2 * sum(Fraction(1, k) for k in range(1, d + 1))
            for d in range(21))
    # e^{2H log t} (A + B H)
    ref = [float(A), float(B) + 2 * math.log(t) * float(A)]
    np.testing.assert_allclose(val.coeffs.real, ref, rtol=1e-12)


@pytest.mark.parametrize("name", NAMES)
def test_single_term_forms(name):
    r, J, g = ring(name), jexp(name, 6), gamma(name)
    c1 = GradedClass.first_chern(r)
    z = 1.7
    v, _ = rhs_ms_gamma(r, J, g, None, z, N=0)
    assert abs(v - ((c1 * math.log(z)).exp() * g).integrate()) < 1e-14 * abs(v)
    s = 20.0
    # (-s)^{c1} with Im log(-s) = -pi, times Gamma(1-c1) (1 - e^{2 pi i c1}) / (-c1)
    L = complex(math.log(s), -math.pi)
    series = GradedClass.zero(r)
    power = GradedClass.one(r)
    for k in range(r.dim + 1):
        series = series + power * ((2j * math.pi) ** (k + 1) / math.factorial(k + 1))
        power = power * c1
    assert (series * (c1 * -1)).allclose(1 - (c1 * (2j * math.pi)).exp(), atol=1e-12)
    ref = ((c1 * L).exp() * gamma_one_plus(c1, -1) * series * g).integrate()
    v, _ = rhs_local_charge(r, J, None, s, N=0)
    assert abs(v - ref) < 1e-12 * abs(ref)
    ref = (c1 * (c1 * math.log(s)).exp() * g * gamma_one_plus(c1).inverse()).integrate()
    v, _ = rhs_anticanonical(r, J, g, None, s, N=0)
    assert abs(v - ref) < 1e-12 * abs(ref)
    v, _ = rhs_hcI_series(r, J, None, -s, N=0)
    ref = ((c1 * math.log(s)).exp() * gamma_one_plus(c1, -1) * g).integrate() / s
    assert abs(v - ref) < 1e-12 * abs(ref)
    assert abs(v.imag) < 1e-14 * abs(v)


def test_anticanonical_p2_is_real():
    v, _ = rhs_anticanonical(ring("p2"), jexp("p2", 12), gamma("p2"), None, 30.0)
    assert abs(v.imag) < 1e-10 * abs(v)


def test_local_charge_p2_phase():
    v, _ = rhs_local_charge(ring("p2"), jexp("p2", 12), None, 20.0)
    assert abs((v / (2j * math.pi)).imag) < 1e-8 * abs(v)


@pytest.mark.parametrize("name", ["p1", "p2"])
def test_hcI_termwise_laplace_of_degrade_terms(name):
    """Each degree's term equals the numerically Laplace-transformed degrade_eval term."""
    r, J, g = ring(name), jexp(name, 12), gamma(name)
    c1 = GradedClass.first_chern(r)
    s = -10.0
    total = 0
    for m in sorted({d.degree for d in J.classes}):
        # degrade term: e^{-c1 log t} t^m J_m(-1), transformed with e^{s t}
        Jm = GradedClass.zero(r)
        for d, coeffs in zip(J.classes, J.exact):
            if d.degree == m:
                Jm = Jm + GradedClass(r, np.array([float(c) * (-1.0) ** (-m - p)
                                                   for c, p in zip(coeffs, r.degrees)]))
        lap = GradedClass.zero(r)
        power = GradedClass.one(r)
        for p in range(r.dim + 1):
            if p:
                power = power * (c1 * -1) / p
            mom, _ = quad(lambda u: math.exp(s * u) * u ** m * math.log(u) ** p, 0, np.inf,
                          epsabs=1e-15, epsrel=1e-13, limit=200)
            lap = lap + power * mom
        closed = (c1 * math.log(-s)).exp() * (-s) ** (-m - 1) * rgamma_shift(-c1, -m).inverse()
        np.testing.assert_allclose(lap.coeffs, closed.coeffs, rtol=1e-10, atol=1e-10 * abs(closed.coeffs[0]))
        total += (Jm * lap * g).integrate()
    v, _ = rhs_hcI_series(r, J, None, s, N=12)
    assert abs(total - v) < 1e-10 * abs(v)


def test_gamma_of_quotient_complete_intersection_p3():
    r = ring("p3")
    H = GradedClass.divisor(r, 0)
    two_h = H * 2
    got = gamma_of_quotient(gamma("p3"), [two_h, two_h])
    # Gamma(1+H)^4 / Gamma(1+2H)^2 through logarithms
    ref = (gamma_one_plus(H).log() * 4 - gamma_one_plus(two_h).log() * 2).exp()
    np.testing.assert_allclose(got.coeffs, ref.coeffs, atol=1e-14)


def test_gamma_I_p1_large_t():
    angles = []
    for t in (10.0, 100.0, 1000.0):
        J = gamma_I_truncation(ring("p1"), t)
        angles.append(gamma_I_direction(J, t)[2])
    assert angles[0] > angles[1] > angles[2] > 0
    # the deviation decays like exp(-4t)
    assert abs(float(mp.log(angles[2])) / 1000 + 4) < 0.01


def test_gamma_I_p2_component_ratio():
    t = 50.0
    u, g, _ = gamma_I_direction(gamma_I_truncation(ring("p2"), t), t)
    ratio = u[1] / u[0]
    assert abs(ratio / (-3 * float(mp.euler)) - 1) < 0.05
    np.testing.assert_allclose(u, g, rtol=1e-12)


@pytest.mark.parametrize("name", NAMES)
def test_coefficients_decay_factorially(name):
    """max_i |J_{d,i}| (c1.d)! grows at most geometrically in c1.d."""
    J = jexp(name, 30)
    q: dict[int, float] = {}
    for d, coeffs in zip(J.classes, J.exact):
        if d.degree:
            v = float(max(abs(c) for c in coeffs) * math.factorial(d.degree))
            q[d.degree] = max(q.get(d.degree, 0.0), v)
    rates = {m: math.log(v) / m for m, v in q.items()}
    assert max(rates.values()) < 2.0
    late = [r for m, r in rates.items() if m >= 20]
    assert max(late) - min(late) < 0.05
