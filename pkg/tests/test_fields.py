import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rotspec.fields import (
    SpectralField,
    apply_A_power,
    apply_S,
    apply_expS,
    apply_exp_sqrtA,
    bilinear_B,
    bilinear_B_omega,
    convolve_advect,
    eigen_restrict,
    field_from_json,
    field_to_json,
    gevrey_norm,
    inner,
    leray_project,
    low_pass,
    random_gevrey,
)
from rotspec.lattice import build_lattice

LAT3 = build_lattice(cutoff=3)
U3 = random_gevrey(LAT3, seed=2)
V3 = random_gevrey(LAT3, seed=5)

ts = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False)


def test_norm_single_pair():
    # u = 2 cos(x1) e2: one conjugate pair of unit coefficients
    lat = build_lattice(cutoff=2)
    u = SpectralField.from_modes(lat, {(1, 0, 0): [0.0, 1.0, 0.0]})
    assert u.norm() == pytest.approx(math.sqrt(2.0) * (2 * math.pi) ** 1.5, rel=1e-14)
    # lam = 1 on that pair, so every Gevrey weight is a clean factor
    assert u.norm(alpha=0.5, sigma=0.3) == pytest.approx(math.exp(0.3) * u.norm(), rel=1e-13)


def test_norm_mean_contribution():
    lat = build_lattice(cutoff=2)
    u = SpectralField(lat, mean=[3.0, 0.0, 4.0])
    assert u.norm() == pytest.approx(5.0 * lat.volume**0.5, rel=1e-14)
    assert u.norm(alpha=1.0) == 0.0  # mean is killed by any Stokes power


def test_inner_matches_norm():
    assert inner(U3, U3) == pytest.approx(U3.norm() ** 2, rel=1e-13)
    w = U3 + V3
    assert inner(U3, V3) == pytest.approx(
        0.5 * (w.norm() ** 2 - U3.norm() ** 2 - V3.norm() ** 2), rel=1e-10
    )


def test_from_modes_conjugate_fill():
    lat = LAT3
    z = np.array([1.0 + 2.0j, -0.5j, 0.0])
    z = lat.proj[lat.mode_index[(1, 1, 0)]] @ z
    u = SpectralField.from_modes(lat, {(1, 1, 0): z})
    i = lat.mode_index[(-1, -1, 0)]
    np.testing.assert_allclose(u.coeffs[i], np.conj(z))
    assert u.reality_error() == 0.0
    with pytest.raises(ValueError):
        SpectralField.from_modes(lat, {(9, 0, 0): z})
    with pytest.raises(ValueError):
        SpectralField.from_modes(lat, {(1, 1, 0): z, (-1, -1, 0): z})


def test_coeff_shape_check():
    with pytest.raises(ValueError):
        SpectralField(LAT3, np.zeros((4, 3)))


def test_leray_projection():
    lat = LAT3
    rng = np.random.default_rng(1)
    raw = SpectralField(lat, rng.standard_normal((lat.n_modes, 3))
                        + 1j * rng.standard_normal((lat.n_modes, 3)))
    assert raw.divergence_error() > 1e-2
    p = leray_project(raw)
    assert p.divergence_error() < 1e-13
    pp = leray_project(p)
    np.testing.assert_allclose(pp.coeffs, p.coeffs, atol=1e-15)
    # a field parallel to its wave vector projects to zero
    u = SpectralField.from_modes(lat, {(1, 0, 0): [1.0, 0.0, 0.0]})
    assert leray_project(u).norm() < 1e-14


def test_coriolis_antisymmetry():
    su = apply_S(U3)
    assert abs(inner(su, U3)) < 1e-14 * U3.norm() ** 2
    assert inner(su, V3) == pytest.approx(-inner(U3, apply_S(V3)), abs=1e-15)
    assert su.divergence_error() < 1e-14


@given(ts)
@settings(max_examples=50, deadline=None)
def test_rotation_group_isometry(t):
    w = apply_expS(U3, t)
    assert w.norm() == pytest.approx(U3.norm(), rel=1e-12)
    assert w.norm(sigma=0.7) == pytest.approx(U3.norm(sigma=0.7), rel=1e-12)
    assert w.reality_error() < 1e-14
    assert w.divergence_error() < 1e-13


@given(ts, ts)
@settings(max_examples=50, deadline=None)
def test_rotation_group_law(t, s):
    a = apply_expS(apply_expS(U3, t), s)
    b = apply_expS(U3, t + s)
    np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-13)


def test_rotation_group_generator():
    # d/dt exp(tS)u = S exp(tS)u, checked by central difference
    t, h = 0.37, 1e-6
    lhs = (apply_expS(U3, t + h) - apply_expS(U3, t - h)) * (0.5 / h)
    rhs = apply_S(apply_expS(U3, t))
    assert (lhs - rhs).norm() < 1e-9 * rhs.norm()


def test_rotation_commutes_with_stokes():
    a = apply_A_power(apply_expS(U3, 0.9), 1.0)
    b = apply_expS(apply_A_power(U3, 1.0), 0.9)
    np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-14)


def test_stokes_powers():
    lat = LAT3
    u = SpectralField.from_modes(lat, {(1, 1, 0): [1.0, -1.0, 0.0]})
    np.testing.assert_allclose(apply_A_power(u, 1.0).coeffs, 2.0 * u.coeffs)
    np.testing.assert_allclose(apply_A_power(u, -0.5).coeffs, u.coeffs / math.sqrt(2))
    assert gevrey_norm(u, 0.0, 0.4) == pytest.approx(apply_exp_sqrtA(u, 0.4).norm(), rel=1e-13)


def test_shell_partition():
    lat = LAT3
    total = SpectralField(lat)
    for lam in lat.eigenvalues:
        total = total + eigen_restrict(U3, lam)
    np.testing.assert_allclose(total.coeffs, U3.coeffs, atol=1e-16)
    np.testing.assert_allclose(low_pass(U3, lat.cutoff).coeffs, U3.coeffs, atol=1e-16)
    np.testing.assert_allclose(low_pass(U3, 1).coeffs, eigen_restrict(U3, 1).coeffs, atol=1e-16)
    assert eigen_restrict(U3, 2).norm() ** 2 + low_pass(U3, 1).norm() ** 2 + \
        eigen_restrict(U3, 3).norm() ** 2 == pytest.approx(U3.norm() ** 2, rel=1e-13)


def test_random_gevrey_properties():
    u1 = random_gevrey(LAT3, seed=11, sigma=1.0, amplitude=0.25)
    u2 = random_gevrey(LAT3, seed=11, sigma=1.0, amplitude=0.25)
    np.testing.assert_array_equal(u1.coeffs, u2.coeffs)
    assert u1.norm() == pytest.approx(0.25, rel=1e-12)
    assert u1.reality_error() == 0.0
    assert u1.divergence_error() < 1e-15
    u3 = random_gevrey(LAT3, seed=12)
    assert not np.allclose(u1.coeffs, u3.coeffs)


# -- bilinear form against a physical-space quadrature oracle ---------------

def _eval_grid(lat, coeffs, n):
    """Direct (no FFT) evaluation of sum_m c_m e^{i kcheck_m . x} on an n^3 grid."""
    xs = [np.arange(n) * (L / n) for L in lat.L]
    vals = np.zeros((n, n, n, 3), dtype=complex)
    for m in range(lat.n_modes):
        kc = lat.kcheck[m]
        phase = (np.exp(1j * kc[0] * xs[0])[:, None, None]
                 * np.exp(1j * kc[1] * xs[1])[None, :, None]
                 * np.exp(1j * kc[2] * xs[2])[None, None, :])
        vals += phase[..., None] * coeffs[m]
    return vals


def _advect_oracle(u, v, n=8):
    """Fourier coefficients of P (u.grad) v via trapezoid quadrature.

    The grid rule is exact here: every integrand mode has integer reduced
    wavenumbers of magnitude < n, so nothing aliases.
    """
    lat = u.lattice
    U = _eval_grid(lat, u.coeffs, n)
    W = np.zeros((n, n, n, 3), dtype=complex)
    for d in range(3):
        dv = _eval_grid(lat, 1j * lat.kcheck[:, d:d + 1] * v.coeffs, n)
        W += U[..., d:d + 1] * dv
    xs = [np.arange(n) * (L / n) for L in lat.L]
    out = np.zeros_like(u.coeffs)
    for m in range(lat.n_modes):
        kc = lat.kcheck[m]
        phase = (np.exp(-1j * kc[0] * xs[0])[:, None, None]
                 * np.exp(-1j * kc[1] * xs[1])[None, :, None]
                 * np.exp(-1j * kc[2] * xs[2])[None, None, :])
        bhat = (phase[..., None] * W).sum(axis=(0, 1, 2)) / n**3
        ktil = kc / np.linalg.norm(kc)
        out[m] = bhat - ktil * (ktil @ bhat)
    return out


def test_bilinear_matches_quadrature():
    lat = build_lattice(cutoff=4)
    u = random_gevrey(lat, seed=3, amplitude=1.0)
    v = random_gevrey(lat, seed=4, amplitude=1.0)
    got = bilinear_B(u, v).coeffs
    want = _advect_oracle(u, v)
    np.testing.assert_allclose(got, want, atol=1e-13 * np.abs(want).max())


def test_bilinear_matches_quadrature_anisotropic():
    lat = build_lattice(ell=(1, 1, "1/2"), cutoff=5)
    u = random_gevrey(lat, seed=6, amplitude=1.0)
    v = random_gevrey(lat, seed=7, amplitude=1.0)
    got = bilinear_B(u, v).coeffs
    want = _advect_oracle(u, v)
    np.testing.assert_allclose(got, want, atol=1e-13 * np.abs(want).max())


def test_convolution_pairing_shortcut():
    full = convolve_advect(LAT3, U3.coeffs, V3.coeffs, assume_real_pairing=False)
    half = convolve_advect(LAT3, U3.coeffs, V3.coeffs, assume_real_pairing=True)
    np.testing.assert_allclose(half, full, atol=1e-15)


def test_bilinear_energy_orthogonality():
    b = bilinear_B(U3, V3)
    scale = U3.norm() * V3.norm()
    assert abs(inner(b, V3)) < 1e-13 * scale
    assert abs(inner(b, U3) + inner(bilinear_B(U3, U3), V3)) < 1e-13 * scale
    assert b.reality_error() < 1e-15
    assert b.divergence_error() < 1e-13


def test_rotated_bilinear_composition():
    t, om = 0.42, 3.0
    direct = bilinear_B_omega(t, U3, V3, om)
    composed = apply_expS(
        bilinear_B(apply_expS(U3, -om * t), apply_expS(V3, -om * t)), om * t)
    np.testing.assert_allclose(direct.coeffs, composed.coeffs, atol=1e-14)
    assert abs(inner(direct, V3)) < 1e-13 * U3.norm() * V3.norm()
    assert bilinear_B_omega(t, U3, V3, 0.0).coeffs == pytest.approx(bilinear_B(U3, V3).coeffs)


def test_field_json_roundtrip():
    text = field_to_json(U3)
    back = field_from_json(text, LAT3)
    np.testing.assert_allclose(back.coeffs, U3.coeffs, atol=1e-16)
    auto = field_from_json(text)
    assert auto.lattice.ell == LAT3.ell
    for k, i in auto.lattice.mode_index.items():
        np.testing.assert_allclose(auto.coeffs[i], U3.coeffs[LAT3.mode_index[k]], atol=1e-16)


def test_field_json_anisotropic():
    lat = build_lattice(ell=(1, 1, "1/2"), cutoff=5)
    u = random_gevrey(lat, seed=9)
    u.mean[:] = [0.1, -0.2, 0.3]
    auto = field_from_json(field_to_json(u))
    assert auto.lattice.ell == lat.ell
    np.testing.assert_allclose(auto.mean, u.mean)
    assert auto.norm() == pytest.approx(u.norm(), rel=1e-12)
