"""Time integration of the Galerkin system in rotating (u) or transformed (v) form.

The linear part (Stokes + rotation) is advanced exactly mode-by-mode through
its diagonal/planar propagator; classical RK4 acts on the integrating-factor
transformed nonlinearity.  Vanishing nonlinearity therefore reproduces the
linear special solutions to machine precision, and the energy identity
d/dt (|v|^2/2) + ||v||^2 = 0 holds exactly for the truncated system.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Dict, IO, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .lattice import Lattice, build_lattice
from .fields import (
    SpectralField,
    convolve_advect,
    _rotate_coeffs,
    _gevrey_weights,
)

__all__ = [
    "SolverConfig",
    "Trajectory",
    "integrate",
    "transform_trajectory",
    "energy_report",
    "trajectory_to_jsonl",
    "trajectory_from_jsonl",
]


@dataclass
class SolverConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    omega: float = 0.0
    form: str = "v"  # "u" (rotating frame) or "v" (wave-transformed)
    record_stride: int = 1
    t0: float = 0.0

    def __post_init__(self):
        if self.form not in ("u", "v"):
            raise ValueError("form must be 'u' or 'v'")
        if self.dt <= 0 or self.t_end <= self.t0:
            raise ValueError("need dt > 0 and t_end > t0")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


class Trajectory:
    """Recorded samples of one integration (or transform thereof)."""

    def __init__(self, lattice: Lattice, form: str, omega: float,
                 times: np.ndarray, coeffs: np.ndarray, dt: float = float("nan")):
        self.lattice = lattice
        self.form = form
        self.omega = float(omega)
        self.times = np.asarray(times, dtype=float)
        self.coeffs = coeffs  # (R, M, 3) complex
        self.dt = dt

    @property
    def n_samples(self) -> int:
        return len(self.times)

    def field(self, i: int) -> SpectralField:
        return SpectralField(self.lattice, self.coeffs[i].copy())

    def norms(self, alpha: float = 0.0, sigma: float = 0.0) -> np.ndarray:
        w = _gevrey_weights(self.lattice, alpha, sigma)
        sq = np.einsum("rmc,rmc->rm", self.coeffs, np.conj(self.coeffs)).real
        return np.sqrt(self.lattice.volume * (sq @ w))

    def __repr__(self):
        return (f"Trajectory(form={self.form!r}, omega={self.omega}, "
                f"samples={self.n_samples}, t=[{self.times[0]:.3g},{self.times[-1]:.3g}])")


def _nonlin_u(lat: Lattice, C: np.ndarray) -> np.ndarray:
    raw = convolve_advect(lat, C, C, assume_real_pairing=True)
    return -np.einsum("mij,mj->mi", lat.proj, raw)


def _nonlin_v(lat: Lattice, t: float, C: np.ndarray, omega: float) -> np.ndarray:
    theta = -omega * lat.kt3 * t
    Cr = _rotate_coeffs(lat, C, theta)
    raw = convolve_advect(lat, Cr, Cr, assume_real_pairing=True)
    b = np.einsum("mij,mj->mi", lat.proj, raw)
    return -_rotate_coeffs(lat, b, -theta)


def integrate(u0: SpectralField, config: SolverConfig) -> Trajectory:
    """Integrating-factor RK4 for the truncated rotating Navier-Stokes system.

    In u-form the state solves du/dt + Au + Omega*Su + B(u,u) = 0; in v-form
    dv/dt + Av + B_Omega(t,v,v) = 0.  The number of steps is
    round((t_end-t0)/dt); the last step is shortened if t_end is not a step
    multiple.
    """
    lat = u0.lattice
    h = config.dt
    om = config.omega
    t0, t_end = config.t0, config.t_end
    n_steps = int(math.ceil((t_end - t0) / h - 1e-12))

    lam = lat.lam_f

    def make_prop(s: float):
        decay = np.exp(-s * lam)
        if config.form == "u" and om != 0.0:
            theta = -om * lat.kt3 * s
            cos_t, sin_t = np.cos(theta), np.sin(theta)

            def prop(C):
                rot = np.einsum("mij,mj->mi", lat.jk, C)
                return decay[:, None] * (cos_t[:, None] * C + sin_t[:, None] * rot)
        else:
            def prop(C):
                return decay[:, None] * C
        return prop

    Ph, Ph2 = make_prop(h), make_prop(0.5 * h)

    if config.form == "u":
        def N(t, C):
            return _nonlin_u(lat, C)
    else:
        def N(t, C):
            return _nonlin_v(lat, t, C, om)

    C = u0.coeffs.astype(complex).copy()
    times: List[float] = [t0]
    records: List[np.ndarray] = [C.copy()]
    t = t0
    for step in range(n_steps):
        hh = min(h, t_end - t)
        if abs(hh - h) > 1e-12 * h:
            Ph_s, Ph2_s = make_prop(hh), make_prop(0.5 * hh)
        else:
            hh, Ph_s, Ph2_s = h, Ph, Ph2
        a = N(t, C)
        b = N(t + 0.5 * hh, Ph2_s(C + 0.5 * hh * a))
        c = N(t + 0.5 * hh, Ph2_s(C) + 0.5 * hh * b)
        d = N(t + hh, Ph_s(C) + hh * Ph2_s(c))
        C = Ph_s(C) + (hh / 6.0) * (Ph_s(a) + 2.0 * Ph2_s(b + c) + d)
        t = t0 + (step + 1) * h if hh == h else t + hh
        if (step + 1) % config.record_stride == 0 or step == n_steps - 1:
            times.append(t)
            records.append(C.copy())
    return Trajectory(lat, config.form, om, np.array(times), np.array(records), dt=h)


def transform_trajectory(traj: Trajectory, to_form: str) -> Trajectory:
    """Map between u- and v-forms sample-wise: v(t) = exp(Omega t S) u(t)."""
    if to_form == traj.form:
        return traj
    sign = 1.0 if (traj.form, to_form) == ("u", "v") else -1.0
    lat = traj.lattice
    out = np.empty_like(traj.coeffs)
    for i, t in enumerate(traj.times):
        out[i] = _rotate_coeffs(lat, traj.coeffs[i], sign * traj.omega * lat.kt3 * t)
    return Trajectory(lat, to_form, traj.omega, traj.times.copy(), out, dt=traj.dt)


_FD6 = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0


def energy_report(traj: Trajectory) -> Dict:
    """Residual of d/dt(|v|^2/2) + ||v||^2 = 0 along the recorded samples.

    Two measurements: a 6th-order centred difference of the energy at every
    interior sample (truncation error O(spacing^6), so the scheme's O(dt^4)
    dominates), and the windowed integral form via Simpson.  Requires a
    uniform record spacing.
    """
    t = traj.times
    if len(t) < 9:
        raise ValueError("need at least 9 samples for the 6th-order stencil")
    spacing = np.diff(t)
    if np.ptp(spacing) > 1e-9 * spacing.mean():
        raise ValueError("energy_report needs uniformly spaced samples")
    dt = float(spacing.mean())
    energy = 0.5 * traj.norms(0.0, 0.0) ** 2
    dissipation = traj.norms(0.5, 0.0) ** 2
    dE = np.convolve(energy, _FD6[::-1], mode="valid") / dt  # samples 3..R-4
    residual = dE + dissipation[3:-3]
    from scipy.integrate import cumulative_simpson
    integral = energy - energy[0] + cumulative_simpson(dissipation, dx=dt, initial=0.0)
    return {
        "t": t[3:-3],
        "residual": residual,
        "max_abs_residual": float(np.abs(residual).max()),
        "integral_residual": integral,
        "max_abs_integral_residual": float(np.abs(integral).max()),
        "energy": energy,
        "dissipation": dissipation,
    }


# ---------------------------------------------------------------------------
# JSON-lines interchange


def _field_doc(lat: Lattice, coeffs: np.ndarray, mean=None) -> dict:
    modes = []
    for i in range(lat.n_modes):
        if not lat.rep_mask[i] or not np.any(coeffs[i]):
            continue
        modes.append({
            "k": [int(c) for c in lat.ks[i]],
            "re": [float(x) for x in coeffs[i].real],
            "im": [float(x) for x in coeffs[i].imag],
        })
    return {
        "L": [float(x) for x in lat.L],
        "mean": [0.0, 0.0, 0.0] if mean is None else [float(x) for x in mean],
        "modes": modes,
    }


def config_hash(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def trajectory_to_jsonl(traj: Trajectory, stream: IO[str],
                        config_doc: Optional[dict] = None, version: str = "0",
                        gevrey: Sequence[Tuple[float, float]] = ()) -> None:
    meta = {
        "meta": {
            "form": traj.form,
            "omega": traj.omega,
            "dt": traj.dt,
            "lattice": {"ell": [str(e) for e in traj.lattice.ell],
                        "cutoff": str(traj.lattice.cutoff)},
            "config": config_doc or {},
            "config_hash": config_hash(config_doc or {}),
            "gevrey_indices": [[float(a), float(s)] for a, s in gevrey],
            "version": version,
        }
    }
    stream.write(json.dumps(meta, sort_keys=True) + "\n")
    for i, t in enumerate(traj.times):
        f = SpectralField(traj.lattice, traj.coeffs[i])
        rec = {
            "t": float(t),
            "field": _field_doc(traj.lattice, traj.coeffs[i]),
            "norms": {"l2": f.norm(), "h1": f.norm(0.5, 0.0),
                      "gevrey": [f.norm(a, s) for a, s in gevrey]},
        }
        stream.write(json.dumps(rec, sort_keys=True) + "\n")


def trajectory_from_jsonl(stream: IO[str]) -> Tuple[Trajectory, dict]:
    """Returns (trajectory, meta-dict)."""
    header = json.loads(stream.readline())
    meta = header["meta"]
    lat = build_lattice(ell=meta["lattice"]["ell"], cutoff=meta["lattice"]["cutoff"])
    times: List[float] = []
    rows: List[np.ndarray] = []
    for line in stream:
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        C = np.zeros((lat.n_modes, 3), dtype=complex)
        for m in rec["field"]["modes"]:
            i = lat.mode_index[tuple(int(c) for c in m["k"])]
            z = np.array(m["re"], dtype=float) + 1j * np.array(m["im"], dtype=float)
            C[i] = z
            C[lat.conj_idx[i]] = np.conj(z)
        times.append(rec["t"])
        rows.append(C)
    traj = Trajectory(lat, meta["form"], meta["omega"], np.array(times),
                      np.array(rows), dt=meta.get("dt", float("nan")))
    return traj, meta
