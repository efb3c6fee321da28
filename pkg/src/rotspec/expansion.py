"""Long-time asymptotic expansion of trajectories, built order by order.

A zero-mean trajectory of the transformed system admits
v(t) ~ sum_n q_n(t) exp(-mu_n t), where mu_n runs through the additive
semigroup generated by the Stokes eigenvalues and each q_n is an oscillating
polynomial coefficient.  Orders are constructed recursively: the forcing at
order n is the bilinear product of all earlier pairs whose rates sum to
mu_n, solved shell by shell through the three-branch mode ODE.  On shells
where mu_n equals the Stokes eigenvalue the ODE leaves a free constant; it
is recovered from the trajectory through an exact integral identity (the
projected remainder plus the accumulated projected forcing is constant in
time), which makes the estimate window-independent instead of biased by
O(exp(-gap t)) like a plain limit.

Everything here is a statement about the Galerkin system on the fixed
lattice: products falling outside the cutoff are dropped identically in the
integrator and in the symbolic bilinear form, so the expansion converges to
the computed trajectory, not merely to the PDE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_simpson

from .lattice import Lattice, SemigroupTable, semigroup_table
from .fields import SpectralField, _rotate_coeffs, _gevrey_weights, convolve_advect
from .spoly import SPoly, antiderivative, apply_expS_spoly, bilinear_spoly, ode_solve
from .solver import Trajectory

__all__ = [
    "FitPolicy",
    "Expansion",
    "expand",
    "verify_expansion_system",
    "remainder_rate",
    "fit_log_slope",
    "fit_decay_rate",
    "to_u_expansion",
    "time_average_Q",
    "omega_sweep_average",
]


@dataclass
class FitPolicy:
    """Controls for recovering resonant constants from trajectory data.

    xi_windows: two or more disjoint (t0, t1) windows; the constant is the
    mean of the integral-identity estimate over their union, and the spread
    between window means is reported as a consistency diagnostic.  None
    picks windows in the second half of the run automatically.
    """

    xi_windows: Optional[Tuple[Tuple[float, float], ...]] = None
    xi_rel_tol: float = 1e-6
    min_samples: int = 64

    def windows_for(self, t0: float, t1: float) -> Tuple[Tuple[float, float], ...]:
        if self.xi_windows is not None:
            return self.xi_windows
        span = t1 - t0
        return (
            (t0 + 0.50 * span, t0 + 0.70 * span),
            (t0 + 0.70 * span, t0 + 0.90 * span),
        )


def _b_omega_raw(lat: Lattice, t: float, X: np.ndarray, Y: np.ndarray,
                 omega: float) -> np.ndarray:
    """Rotated projected advection on raw coefficient arrays (real-paired)."""
    theta = -omega * lat.kt3 * t
    cu = _rotate_coeffs(lat, X, theta)
    cv = _rotate_coeffs(lat, Y, theta)
    raw = convolve_advect(lat, cu, cv, assume_real_pairing=True)
    c = np.einsum("mij,mj->mi", lat.proj, raw)
    return _rotate_coeffs(lat, c, -theta)


class Expansion:
    """Orders q_1..q_N of one trajectory, with their rates and diagnostics."""

    def __init__(self, lattice: Lattice, omega: float, table: SemigroupTable,
                 policy: FitPolicy):
        self.lattice = lattice
        self.omega = omega
        self.table = table
        self.policy = policy
        self.mus: List[Fraction] = []
        self.orders: List[SPoly] = []
        self.forcings: List[SPoly] = []
        self.diagnostics: List[dict] = []
        self._pair_cache: Dict[Tuple[int, int], SPoly] = {}

    @property
    def n_orders(self) -> int:
        return len(self.orders)

    def pair(self, a: int, b: int) -> SPoly:
        """Cached symbolic bilinear product of orders a and b (0-based)."""
        key = (a, b)
        if key not in self._pair_cache:
            self._pair_cache[key] = bilinear_spoly(self.orders[a], self.orders[b], self.omega)
        return self._pair_cache[key]

    def partial_sum_coeffs(self, ts: np.ndarray, n: Optional[int] = None) -> np.ndarray:
        """Coefficients of sum_{m<=n} q_m(t) exp(-mu_m t) at the sample times."""
        n = self.n_orders if n is None else n
        ts = np.asarray(ts, dtype=float)
        out = np.zeros((len(ts), self.lattice.n_modes, 3), dtype=complex)
        for i in range(n):
            decay = np.exp(-float(self.mus[i]) * ts)
            out += decay[:, None, None] * self.orders[i].evaluate_many(ts)
        return out

    def __repr__(self):
        mus = [str(m) for m in self.mus]
        return f"Expansion(orders={self.n_orders}, mu={mus}, omega={self.omega})"


def _require_uniform(ts: np.ndarray, minimum: int):
    if len(ts) < minimum:
        raise ValueError(f"need at least {minimum} recorded samples, have {len(ts)}")
    gaps = np.diff(ts)
    if np.ptp(gaps) > 1e-9 * gaps[0]:
        raise ValueError("expansion fitting needs uniformly spaced samples")


def expand(traj: Trajectory, n_orders: int, policy: Optional[FitPolicy] = None) -> Expansion:
    """Build the first n_orders terms of the expansion of a v-form trajectory."""
    if traj.form != "v":
        raise ValueError("expansion is built in the transformed frame; "
                         "pass a v-form trajectory (see transform_trajectory)")
    policy = policy or FitPolicy()
    ts = traj.times
    _require_uniform(ts, policy.min_samples)
    lat = traj.lattice

    cap = lat.cutoff
    table = semigroup_table(lat, cap)
    while len(table) < n_orders + 1:
        cap = cap * 2
        if cap > 64 * lat.cutoff:
            raise ValueError(f"cannot reach {n_orders + 1} semigroup elements")
        table = SemigroupTable(lat.eigenvalues, cap)

    exp = Expansion(lat, traj.omega, table, policy)
    # running evaluation of the partial sum at the sample times
    s_eval = np.zeros_like(traj.coeffs)

    for n in range(n_orders):
        mu = table.mu[n]
        forcing = SPoly.zero(lat)
        truncated = False
        for (a, b) in table.decompositions[n]:
            if exp.orders[a].is_zero or exp.orders[b].is_zero:
                continue
            # support of the product can reach (sqrt(La)+sqrt(Lb))^2; the
            # Galerkin convolution silently drops anything past the cutoff
            la, lb = exp.orders[a].support_lams()[-1], exp.orders[b].support_lams()[-1]
            if (math.sqrt(float(la)) + math.sqrt(float(lb))) ** 2 > float(lat.cutoff):
                truncated = True
            forcing = forcing - exp.pair(a, b)

        particular = SPoly.zero(lat)
        if not forcing.is_zero:
            for lam in forcing.support_lams():
                shell_forcing = forcing.restrict_shell(lam)
                particular = particular + ode_solve(lam - mu, shell_forcing)

        diag = {"mu": float(mu), "resonant": bool(table.is_eigenvalue(mu)),
                "support_truncated": truncated}
        q = particular
        if table.is_eigenvalue(mu):
            xi, fit_diag = _fit_resonant_constant(exp, traj, s_eval, mu, particular)
            diag.update(fit_diag)
            if np.any(xi.coeffs):
                q = q + SPoly.from_field(xi)
        exp.mus.append(mu)
        exp.orders.append(q)
        exp.forcings.append(forcing)
        exp.diagnostics.append(diag)
        if not q.is_zero:
            decay = np.exp(-float(mu) * ts)
            s_eval += decay[:, None, None] * q.evaluate_many(ts)
    return exp


def _fit_resonant_constant(exp: Expansion, traj: Trajectory, s_eval: np.ndarray,
                           mu: Fraction, particular: SPoly) -> Tuple[SpectralField, dict]:
    """Recover the free constant on the resonant shell from the trajectory.

    With r = v - (partial sum), the projected quantity
        z(t) = e^{mu t} R r(t) - R particular(t)
    satisfies z' = g with g the projected, rescaled bilinear residual below;
    hence xi = z(t) + int_t^inf g.  The tail beyond the last sample is the
    same constant for every t, so it drops out of window comparisons and
    biases the value only by the (tiny) truncated integral.
    """
    lat = exp.lattice
    ts = traj.times
    mu_f = float(mu)
    shell = lat.shell_indices(mu)
    R = len(ts)
    v = traj.coeffs
    r = v - s_eval
    emu = np.exp(mu_f * ts)

    g = np.zeros((R, len(shell), 3), dtype=complex)
    for i in range(R):
        t = float(ts[i])
        acc = _b_omega_raw(lat, t, r[i], v[i], exp.omega)
        acc += _b_omega_raw(lat, t, s_eval[i], r[i], exp.omega)
        g[i] = -emu[i] * acc[shell]
    # symbolic pairs of earlier orders whose combined rate exceeds mu
    for a in range(exp.n_orders):
        for b in range(exp.n_orders):
            total = exp.mus[a] + exp.mus[b]
            if total <= mu:
                continue
            if exp.orders[a].is_zero or exp.orders[b].is_zero:
                continue
            ps = exp.pair(a, b).restrict_shell(mu)
            if ps.is_zero:
                continue
            decay = np.exp(-(float(total) - mu_f) * ts)
            g -= decay[:, None, None] * ps.evaluate_many(ts)[:, shell, :]

    # scipy's cumulative_simpson is real-only; integrate the parts separately
    G = cumulative_simpson(g.real, x=ts, axis=0, initial=0.0) \
        + 1j * cumulative_simpson(g.imag, x=ts, axis=0, initial=0.0)
    z = emu[:, None, None] * r[:, shell, :]
    if not particular.is_zero:
        z = z - particular.restrict_shell(mu).evaluate_many(ts)[:, shell, :]
    xi_t = z + (G[-1] - G)

    windows = exp.policy.windows_for(float(ts[0]), float(ts[-1]))
    means = []
    union = np.zeros(R, dtype=bool)
    for (a, b) in windows:
        mask = (ts >= a) & (ts < b)  # half-open: touching windows stay disjoint
        if not mask.any():
            raise ValueError(f"fit window ({a}, {b}) contains no samples")
        union |= mask
        means.append(xi_t[mask].mean(axis=0))
    xi_bar = xi_t[union].mean(axis=0)
    scale = max(float(np.linalg.norm(xi_bar)), 1e-300)
    spread = max(
        float(np.linalg.norm(mi - mj)) / scale
        for i, mi in enumerate(means) for mj in means[i + 1:]
    ) if len(means) > 1 else 0.0
    # linear-drift rejection: a converged estimate is constant over the union
    tu = ts[union]
    A = np.column_stack([np.ones_like(tu), tu - tu.mean()])
    sol, *_ = np.linalg.lstsq(A, xi_t[union].reshape(len(tu), -1), rcond=None)
    drift_rate = float(np.linalg.norm(sol[1])) / scale

    full = np.zeros((lat.n_modes, 3), dtype=complex)
    full[shell] = xi_bar
    # exact reality pairing: average with the mirrored conjugate
    full = 0.5 * (full + np.conj(full[lat.conj_idx]))
    diag = {
        "xi_norm": float(np.linalg.norm(full)),
        "xi_window_spread": spread,
        "xi_windows": [list(w) for w in windows],
        "xi_window_means_norm": [float(np.linalg.norm(m)) for m in means],
        "xi_drift_rate": drift_rate,
    }
    if spread > exp.policy.xi_rel_tol:
        diag["xi_spread_warning"] = True
    if drift_rate > 1e-4:
        diag["xi_drift_warning"] = True
    return SpectralField(lat, full), diag


# ---------------------------------------------------------------------------
# verification and rate measurement


def verify_expansion_system(exp: Expansion) -> dict:
    """Symbolic residual q_n' + (A - mu_n) q_n - F_{n-1} per order.

    Exactness is per coefficient; the report is relative to the larger of
    the order and forcing magnitudes.
    """
    per_order = []
    for q, mu, forcing in zip(exp.orders, exp.mus, exp.forcings):
        residual = q.differentiate() + q.apply_stokes() - q.scale(float(mu)) - forcing
        scale = max(q.max_abs(), forcing.max_abs(), 1e-300)
        per_order.append(residual.max_abs() / scale)
    return {"per_order": per_order, "max_residual": max(per_order) if per_order else 0.0}


def fit_log_slope(t: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    """Least-squares decay rate of y ~ C exp(-s t); returns (s, half width).

    The half width is a 2-sigma confidence from the fit residual, useful to
    compare rates measured on different data sets.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = y > 0
    t, y = t[mask], y[mask]
    if len(t) < 3:
        raise ValueError("need at least 3 positive samples for a rate fit")
    X = np.column_stack([np.ones_like(t), -t])
    coef, *_ = np.linalg.lstsq(X, np.log(y), rcond=None)
    resid = np.log(y) - X @ coef
    dof = max(len(t) - 2, 1)
    cov = np.linalg.inv(X.T @ X) * float(resid @ resid) / dof
    return float(coef[1]), 2.0 * float(np.sqrt(cov[1, 1]))


def fit_decay_rate(t: np.ndarray, y: np.ndarray) -> dict:
    """Decay rate of y ~ C t^b exp(-s t), the form resonant orders produce.

    Fitting the algebraic prefactor along with the exponent removes the
    downward bias (about b / mean t) a plain log-linear fit suffers when a
    resonant monomial dominates the remainder.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = (y > 0) & (t > 0)
    t, y = t[mask], y[mask]
    if len(t) < 4:
        raise ValueError("need at least 4 positive samples for a rate fit")
    X = np.column_stack([np.ones_like(t), -t, np.log(t)])
    coef, *_ = np.linalg.lstsq(X, np.log(y), rcond=None)
    resid = np.log(y) - X @ coef
    dof = max(len(t) - 3, 1)
    cov = np.linalg.inv(X.T @ X) * float(resid @ resid) / dof
    plain, plain_half = fit_log_slope(t, y)
    return {
        "slope": float(coef[1]),
        "confidence": 2.0 * float(np.sqrt(cov[1, 1])),
        "prefactor_power": float(coef[2]),
        "slope_plain": plain,
        "confidence_plain": plain_half,
    }


def remainder_rate(exp: Expansion, traj: Trajectory, order: int,
                   window: Optional[Tuple[float, float]] = None,
                   alpha: float = 0.0, sigma: float = 0.0) -> dict:
    """Measured decay rate of the remainder after subtracting `order` terms.

    The default window is the last third of the run, clipped where the
    remainder drops under 100x the integrator's error floor (dt^4 times the
    initial norm); a floor flag marks fits that clipped or sit near it.
    Returns the fitted rate with confidence and the semigroup prediction
    for the next rate.
    """
    if order < 1 or order > exp.n_orders:
        raise ValueError(f"order must be in 1..{exp.n_orders}")
    lat = exp.lattice
    ts = traj.times
    rem = traj.coeffs - exp.partial_sum_coeffs(ts, order)
    w = _gevrey_weights(lat, alpha, sigma)
    sq = np.einsum("rmc,rmc->rm", rem, np.conj(rem)).real
    norms = np.sqrt(lat.volume * (sq @ w))

    sq0 = np.einsum("mc,mc->", traj.coeffs[0], np.conj(traj.coeffs[0])).real
    norm0 = float(np.sqrt(lat.volume * sq0))
    dt_eff = traj.dt if np.isfinite(traj.dt) and traj.dt > 0 else float(ts[1] - ts[0])
    floor = dt_eff ** 4 * norm0

    if window is None:
        t0, t1 = float(ts[0]), float(ts[-1])
        window = (t0 + (t1 - t0) * 2.0 / 3.0, t1)
    mask = (ts >= window[0]) & (ts <= window[1])
    clipped = mask & (norms >= 100.0 * floor)
    flagged = bool(clipped.sum() < mask.sum())
    if clipped.sum() >= 8:
        mask = clipped
    fit = fit_decay_rate(ts[mask], norms[mask])
    expected = float(exp.table.mu[order]) if order < len(exp.table.mu) else None
    fit.update({
        "expected": expected,
        "window": [float(window[0]), float(window[1])],
        "n_samples": int(mask.sum()),
        "floor_flag": flagged or bool(norms[mask].min() < 100.0 * floor),
        "floor_estimate": floor,
        "times": ts,
        "norms": norms,
    })
    return fit


# ---------------------------------------------------------------------------
# the untransformed expansion and sliding averages


def to_u_expansion(exp: Expansion) -> List[Tuple[Fraction, SPoly]]:
    """Oscillating coefficients of the original (rotating-frame) variable.

    u = exp(-Omega t S) v maps order-wise: Q_n = exp(-Omega t S) q_n, with
    identical rates; the wave group only reshuffles frequencies.
    """
    return [(mu, apply_expS_spoly(q, -exp.omega)) for mu, q in zip(exp.mus, exp.orders)]


def time_average_Q(q: SPoly, T: float) -> SPoly:
    """Sliding average (1/T) int_t^{t+T} q(s) ds, again an S-polynomial."""
    if T <= 0:
        raise ValueError("averaging window must be positive")
    F = antiderivative(q)
    return (F.time_shift(T) - F).scale(1.0 / T)


def omega_sweep_average(xi: SpectralField, omegas: Sequence[float], T: float,
                        t: float = 0.0) -> dict:
    """L2 size of the averaged leading coefficient across rotation rates.

    For each rate the leading coefficient Q_1(t) = exp(-Omega t S) xi is
    averaged over a window of length T and its norm taken at time t.
    Components with vertical wavenumber zero are untouched by the wave
    group, so their contribution is rate-independent; the rest shrinks like
    the averaged rotation.
    """
    norms = []
    for om in omegas:
        Q1 = apply_expS_spoly(SPoly.from_field(xi), -float(om))
        avg = time_average_Q(Q1, T)
        norms.append(avg.evaluate(t).norm())
    return {"omega": [float(o) for o in omegas], "norm": norms, "T": float(T), "t": float(t)}
