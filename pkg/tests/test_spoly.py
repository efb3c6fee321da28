import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from rotspec.fields import SpectralField, apply_expS, bilinear_B_omega, random_gevrey
from rotspec.lattice import build_lattice
from rotspec.spoly import (
    Frequency,
    OdeResonanceError,
    Phase,
    ScalarSPoly,
    SPoly,
    antiderivative,
    apply_expS_spoly,
    bilinear_spoly,
    integrate_term,
    mode_rotation_frequency,
    ode_solve,
    spoly_from_json,
    spoly_to_json,
    sspoly_phase_shift,
)

LAT = build_lattice(cutoff=3)
OMEGA = 3.0


def _random_spoly(lat, seed, degrees=(0, 1, 2), omega=OMEGA):
    """Real-paired polynomial with mixed powers, still and rotating frequencies."""
    rng = np.random.default_rng(seed)
    terms = {}
    for i in range(lat.n_modes):
        if not lat.rep_mask[i]:
            continue
        k = tuple(int(x) for x in lat.ks[i])
        kk = tuple(-x for x in k)
        for m in degrees:
            for w in (Frequency.zero(), mode_rotation_frequency(lat, i, omega)):
                c = lat.proj[i] @ (rng.standard_normal(3) + 1j * rng.standard_normal(3))
                terms[(k, m, w)] = terms.get((k, m, w), 0.0) + c
                terms[(kk, m, -w)] = terms.get((kk, m, -w), 0.0) + np.conj(c)
    return SPoly(lat, terms)


# -- formal frequencies -----------------------------------------------------

fracs = st.fractions(min_value=-3, max_value=3, max_denominator=6)


@st.composite
def frequencies(draw):
    parts = []
    if draw(st.booleans()):
        parts.append((("rot", 2), draw(fracs), OMEGA * math.sqrt(2)))
    if draw(st.booleans()):
        parts.append((("rot", 3), draw(fracs), OMEGA * math.sqrt(3)))
    if draw(st.booleans()):
        parts.append((("user", 7, 10), draw(fracs), 0.7))
    return Frequency(parts)


@given(frequencies(), frequencies(), frequencies())
@settings(max_examples=100)
def test_frequency_algebra(a, b, c):
    assert a + b == b + a
    assert (a + b) + c == a + (b + c)
    assert (a - a).is_zero
    assert (a + Frequency.zero()) == a
    assert a.scale(2).value == pytest.approx(2 * a.value, abs=1e-12)
    assert (a + b).value == pytest.approx(a.value + b.value, abs=1e-12)
    assert (-a).value == -a.value
    if a == b:
        assert hash(a) == hash(b)


def test_frequency_rotation_sign():
    f = Frequency.rotation(2, Fraction(1, 2), -OMEGA)
    assert f.value == pytest.approx(-0.5 * OMEGA * math.sqrt(2), rel=1e-15)
    assert Frequency.rotation(2, 0, OMEGA).is_zero
    assert Frequency.rotation(2, 1, 0.0).is_zero
    g = Frequency.user(-0.25)
    assert g.value == -0.25
    assert (-g) == Frequency.user(0.25)


def test_frequency_unit_conflict():
    with pytest.raises(ValueError):
        Frequency([(("rot", 2), Fraction(1), 3.0), (("rot", 2), Fraction(1), 4.0)])


def test_collision_warning():
    k = (1, 0, 0)
    terms = {
        (k, 0, Frequency.user(1.0)): np.array([0.0, 1.0, 0.0]),
        (k, 0, Frequency.user(1.0 + 1e-12)): np.array([0.0, 0.0, 1.0]),
    }
    with pytest.warns(UserWarning, match="collision"):
        f = SPoly(LAT, terms, check_collisions=True)
    assert f.n_terms() == 2  # kept formally distinct


# -- closed-form antiderivative ---------------------------------------------

@pytest.mark.parametrize("m,alpha,omega", [
    (0, -1.5, 2.7), (1, -1.5, 2.7), (3, 0.8, -1.3), (2, 0.0, 1.0), (2, -2.0, 0.0),
])
def test_integrate_term_against_quadrature(m, alpha, omega):
    C = integrate_term(m, alpha, omega)

    def F(t):
        I = np.array([math.exp(alpha * t) * math.cos(omega * t),
                      math.exp(alpha * t) * math.sin(omega * t)])
        return sum(t**n * (C[n] @ I) for n in range(m + 1))

    a, b = 0.3, 1.1
    for row, trig in [(0, math.cos), (1, math.sin)]:
        want, err = quad(lambda t: t**m * math.exp(alpha * t) * trig(omega * t), a, b,
                         epsabs=1e-13, epsrel=1e-13)
        assert F(b)[row] - F(a)[row] == pytest.approx(want, abs=1e-10)


def test_integrate_term_rejects_degenerate():
    with pytest.raises(ValueError):
        integrate_term(-1, 1.0, 0.0)
    with pytest.raises(ValueError):
        integrate_term(2, 0.0, 0.0)


# -- scalar polynomials ------------------------------------------------------

def test_scalar_trig():
    w = Frequency.user(1.7)
    for t in (0.0, 0.4, -2.2):
        assert ScalarSPoly.cosine(w, 2.0)(t) == pytest.approx(2 * math.cos(1.7 * t))
        assert ScalarSPoly.sine(w)(t) == pytest.approx(math.sin(1.7 * t))
        assert ScalarSPoly.monomial(2, 3.0)(t) == pytest.approx(3 * t * t)


def test_multiply_scalar():
    f = _random_spoly(LAT, seed=1, degrees=(0, 1))
    w = Frequency.user(0.9)
    g = ScalarSPoly.cosine(w)
    fg = f.multiply_scalar(g)
    for t in (0.2, 1.3):
        np.testing.assert_allclose(
            fg.evaluate(t).coeffs,
            math.cos(0.9 * t) * f.evaluate(t).coeffs, atol=1e-12)


# -- container behaviour ----------------------------------------------------

def test_spoly_canonicalization():
    k = (1, 0, 0)
    z = np.array([0.0, 1.0, 1.0])
    f = SPoly(LAT, {(k, 0, Frequency.zero()): z})
    g = SPoly(LAT, {(k, 0, Frequency.zero()): -z})
    assert (f + g).is_zero
    assert (f - f).is_zero
    assert f.scale(0).is_zero
    assert SPoly.zero(LAT).max_abs() == 0.0
    h = f + f.scale(2.0)
    assert h.n_terms() == 1
    np.testing.assert_allclose(h.terms[(k, 0, Frequency.zero())], 3 * z)


def test_from_field_and_restrict():
    u = random_gevrey(LAT, seed=8)
    f = SPoly.from_field(u)
    np.testing.assert_allclose(f.evaluate(17.3).coeffs, u.coeffs, atol=1e-16)
    assert f.support_lams() == LAT.eigenvalues
    parts = [f.restrict_shell(l) for l in LAT.eigenvalues]
    total = SPoly.zero(LAT)
    for p in parts:
        total = total + p
    np.testing.assert_allclose(total.evaluate(0.5).coeffs, u.coeffs, atol=1e-16)
    assert f.apply_stokes().evaluate(0.0).norm() == pytest.approx(u.norm(alpha=1.0), rel=1e-12)


def test_evaluate_many_matches_pointwise():
    f = _random_spoly(LAT, seed=2)
    ts = np.array([0.0, 0.3, 0.9, 2.1])
    block = f.evaluate_many(ts)
    for j, t in enumerate(ts):
        np.testing.assert_allclose(block[j], f.evaluate(float(t)).coeffs, atol=1e-13)
    assert f.reality_error() < 1e-15


def test_time_shift():
    f = _random_spoly(LAT, seed=3)
    g = f.time_shift(0.8)
    for t in (0.0, 0.45, 1.7):
        np.testing.assert_allclose(g.evaluate(t).coeffs, f.evaluate(t + 0.8).coeffs,
                                   atol=1e-12)
    assert f.time_shift(0.0).n_terms() == f.n_terms()


def test_time_dilate():
    f = _random_spoly(LAT, seed=4)
    g = f.time_dilate(Fraction(3, 2))
    for t in (0.0, 0.6, 1.1):
        np.testing.assert_allclose(g.evaluate(t).coeffs, f.evaluate(1.5 * t).coeffs,
                                   atol=1e-12)


def test_differentiate_finite_difference():
    f = _random_spoly(LAT, seed=5)
    df = f.differentiate()
    t, h = 0.7, 1e-6
    fd = (f.evaluate(t + h).coeffs - f.evaluate(t - h).coeffs) / (2 * h)
    np.testing.assert_allclose(df.evaluate(t).coeffs, fd, atol=1e-8)


def test_antiderivative_inverts_differentiate():
    f = _random_spoly(LAT, seed=6)
    F = antiderivative(f)
    resid = F.differentiate() - f
    assert resid.max_abs() < 1e-13 * f.max_abs()
    assert F.evaluate(0.0).norm() < 1e-14


# -- the three-branch mode ODE ----------------------------------------------

@pytest.mark.parametrize("beta", [Fraction(3, 2), -2, Fraction(0)])
def test_ode_solve_residual(beta):
    p = _random_spoly(LAT, seed=7)
    q = ode_solve(beta, p)
    resid = q.differentiate() + q.scale(float(beta)) - p
    assert resid.max_abs() < 1e-12 * p.max_abs()
    assert q.reality_error() < 1e-13


def test_ode_solve_single_mode_closed_form():
    k = (0, 0, 1)
    w = Frequency.user(2.0)
    c = np.array([1.0, 1.0j, 0.0])
    p = SPoly(LAT, {(k, 0, w): c})
    q = ode_solve(Fraction(3), p)
    np.testing.assert_allclose(q.terms[(k, 0, w)], c / (3 + 2j), atol=1e-15)
    # degree 1: q = (t/gamma - 1/gamma^2) c e^{iwt}
    p1 = SPoly(LAT, {(k, 1, w): c})
    q1 = ode_solve(Fraction(3), p1)
    np.testing.assert_allclose(q1.terms[(k, 1, w)], c / (3 + 2j), atol=1e-15)
    np.testing.assert_allclose(q1.terms[(k, 0, w)], -c / (3 + 2j) ** 2, atol=1e-15)


def test_ode_solve_resonant_pins_initial_value():
    p = _random_spoly(LAT, seed=9)
    xi0 = random_gevrey(LAT, seed=10, amplitude=0.5)
    q = ode_solve(0, p, xi0=xi0)
    np.testing.assert_allclose(q.evaluate(0.0).coeffs, xi0.coeffs, atol=1e-13)
    resid = q.differentiate() - p
    assert resid.max_abs() < 1e-12 * p.max_abs()
    # monomial rule raises the degree on still terms
    assert q.degree() == p.degree() + 1


def test_ode_solve_degenerate_gamma():
    k = (1, 0, 0)
    p = SPoly(LAT, {(k, 0, Frequency.user(1e-12)): np.array([0.0, 1.0, 0.0])})
    with pytest.raises(OdeResonanceError):
        ode_solve(0, p)
    with pytest.raises(OdeResonanceError):
        ode_solve(1e-12, SPoly(LAT, {(k, 0, Frequency.zero()): np.array([0.0, 1.0, 0.0])}))


# -- wave-group action and bilinear form ------------------------------------

def test_apply_expS_spoly_matches_numeric():
    u = random_gevrey(LAT, seed=11)
    f = apply_expS_spoly(SPoly.from_field(u), OMEGA)
    for t in (0.0, 0.37, 1.9):
        np.testing.assert_allclose(
            f.evaluate(t).coeffs, apply_expS(u, OMEGA * t).coeffs, atol=1e-13)
    assert f.reality_error() < 1e-15
    assert apply_expS_spoly(SPoly.from_field(u), 0.0).n_terms() == SPoly.from_field(u).n_terms()


def test_bilinear_spoly_matches_numeric():
    u = random_gevrey(LAT, seed=12)
    v = random_gevrey(LAT, seed=13)
    h = bilinear_spoly(SPoly.from_field(u), SPoly.from_field(v), OMEGA)
    for t in (0.0, 0.51, 1.2):
        np.testing.assert_allclose(
            h.evaluate(t).coeffs, bilinear_B_omega(t, u, v, OMEGA).coeffs, atol=1e-13)
    assert h.reality_error() < 1e-13
    # bilinearity in the polynomial multiplier: B(t*u, v) = t * B(u, v)
    h1 = bilinear_spoly(SPoly.from_field(u, m=1), SPoly.from_field(v), OMEGA)
    t = 0.73
    np.testing.assert_allclose(
        h1.evaluate(t).coeffs, t * bilinear_B_omega(t, u, v, OMEGA).coeffs, atol=1e-13)


# -- drift phases ------------------------------------------------------------

def _drift_displacement(U0, omega, t):
    """V(t) = int_0^t U(s) ds by quadrature, with U the rotating mean."""
    def U(s, comp):
        c, sn = math.cos(omega * s), math.sin(omega * s)
        vec = (c * U0[0] + sn * U0[1], -sn * U0[0] + c * U0[1], U0[2])
        return vec[comp]
    return np.array([quad(U, 0.0, t, args=(comp,), epsabs=1e-13, epsrel=1e-13)[0]
                     for comp in range(3)])


@pytest.mark.parametrize("omega", [4.0, 0.0])
def test_sspoly_phase_shift(omega):
    u = random_gevrey(LAT, seed=14)
    f = SPoly.from_field(u)
    U0 = np.array([0.8, -0.3, 0.5])
    ss = sspoly_phase_shift(f, U0, omega)
    assert ss.reality_error() < 1e-15
    for t in (0.0, 0.6, 1.4):
        V = _drift_displacement(U0, omega, t)
        phases = np.exp(-1j * (LAT.kcheck @ V))
        np.testing.assert_allclose(ss.evaluate(t).coeffs, phases[:, None] * u.coeffs,
                                   atol=1e-12)
    block = ss.evaluate_many(np.array([0.3, 0.9]))
    np.testing.assert_allclose(block[1], ss.evaluate(0.9).coeffs, atol=1e-13)


def test_phase_negate_roundtrip():
    w = Frequency.user(2.5)
    ph = Phase(0.3, -0.4, 1.2, 0.1, w)
    for t in (0.0, 0.7):
        assert ph.negate()(t) == pytest.approx(np.conj(ph(t)), abs=1e-15)


# -- JSON --------------------------------------------------------------------

def test_spoly_json_roundtrip():
    f = _random_spoly(LAT, seed=15, degrees=(0, 2))
    g = f + SPoly(LAT, {((1, 1, 0), 1, Frequency.user(0.37)): np.array([1.0, -1.0, 0.0])})
    back = spoly_from_json(spoly_to_json(g), LAT)
    assert set(back.terms) == set(g.terms)
    for key, c in g.terms.items():
        np.testing.assert_allclose(back.terms[key], c, atol=1e-16)
