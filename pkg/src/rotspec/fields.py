"""Divergence-free spectral velocity fields and the operators acting on them.

A field is a dense (M,3) complex coefficient array aligned with the lattice
mode order, plus a real 3-vector spatial mean.  Every coefficient lives in
the plane orthogonal to its dual wave vector; the conjugate-mode pairing
u_hat(-k) = conj(u_hat(k)) keeps the velocity real.  Norms follow the
Parseval convention |u|^2 = L1*L2*L3 * sum_k |u_hat(k)|^2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .lattice import Lattice, build_lattice

__all__ = [
    "GevreyIndex",
    "SpectralField",
    "random_gevrey",
    "leray_project",
    "gevrey_norm",
    "inner",
    "apply_A_power",
    "apply_exp_sqrtA",
    "apply_S",
    "apply_expS",
    "bilinear_B",
    "bilinear_B_omega",
    "eigen_restrict",
    "low_pass",
    "field_to_json",
    "field_from_json",
]


@dataclass(frozen=True)
class GevreyIndex:
    alpha: float = 0.0
    sigma: float = 0.0


class SpectralField:
    """Velocity field in spectral form on a fixed lattice."""

    __slots__ = ("lattice", "coeffs", "mean")

    def __init__(self, lattice: Lattice, coeffs: Optional[np.ndarray] = None,
                 mean: Optional[Sequence[float]] = None):
        self.lattice = lattice
        if coeffs is None:
            coeffs = np.zeros((lattice.n_modes, 3), dtype=complex)
        else:
            coeffs = np.asarray(coeffs, dtype=complex)
            if coeffs.shape != (lattice.n_modes, 3):
                raise ValueError(f"coefficient array must be ({lattice.n_modes},3)")
        self.coeffs = coeffs
        self.mean = np.zeros(3) if mean is None else np.asarray(mean, dtype=float)

    @classmethod
    def from_modes(cls, lattice: Lattice, modes: Dict[Tuple[int, int, int], Sequence[complex]],
                   mean: Optional[Sequence[float]] = None) -> "SpectralField":
        """Build from a {k: coefficient} dict.

        Conjugate partners may be omitted; missing ones are filled by the
        reality condition.  If both members of a pair are supplied they must
        be consistent.
        """
        u = cls(lattice, mean=mean)
        seen = set()
        for k, z in modes.items():
            k = tuple(int(c) for c in k)
            if not lattice.contains(k):
                raise ValueError(f"mode {k} is outside the lattice (cutoff {lattice.cutoff})")
            i = lattice.mode_index[k]
            u.coeffs[i] = np.asarray(z, dtype=complex)
            seen.add(i)
        for i in list(seen):
            j = lattice.conj_idx[i]
            if j not in seen:
                u.coeffs[j] = np.conj(u.coeffs[i])
        err = u.reality_error()
        if err > 1e-10 * max(1.0, float(np.abs(u.coeffs).max())):
            raise ValueError(f"conjugate-mode pairing violated (error {err:.2e})")
        return u

    def copy(self) -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs.copy(), self.mean.copy())

    def reality_error(self) -> float:
        return float(np.abs(self.coeffs[self.lattice.conj_idx] - np.conj(self.coeffs)).max(initial=0.0))

    def divergence_error(self) -> float:
        return float(np.abs(np.einsum("mc,mc->m", self.coeffs, self.lattice.kcheck)).max(initial=0.0))

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs + other.coeffs, self.mean + other.mean)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs - other.coeffs, self.mean - other.mean)

    def __mul__(self, a: float) -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs * a, self.mean * a)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return self * (-1.0)

    def norm(self, alpha: float = 0.0, sigma: float = 0.0) -> float:
        return gevrey_norm(self, alpha, sigma)


def _gevrey_weights(lattice: Lattice, alpha: float, sigma: float) -> np.ndarray:
    lam = lattice.lam_f
    w = np.exp(2.0 * sigma * np.sqrt(lam))
    if alpha != 0.0:
        w = w * lam ** (2.0 * alpha)
    return w


def gevrey_norm(u: SpectralField, alpha: float = 0.0, sigma: float = 0.0) -> float:
    """|A^alpha exp(sigma*A^(1/2)) u| with the volume-weighted Parseval sum.

    The spatial mean contributes only to the plain L2 norm (alpha = 0),
    where the zero mode carries unit weight.
    """
    w = _gevrey_weights(u.lattice, alpha, sigma)
    total = float(np.sum(w * np.einsum("mc,mc->m", u.coeffs, np.conj(u.coeffs)).real))
    if alpha == 0.0:
        total += float(np.dot(u.mean, u.mean))
    return math.sqrt(u.lattice.volume * total)


def inner(u: SpectralField, v: SpectralField) -> float:
    """Real L2 inner product <u, v>."""
    s = complex(np.einsum("mc,mc->", u.coeffs, np.conj(v.coeffs)))
    return u.lattice.volume * (s.real + float(np.dot(u.mean, v.mean)))


def leray_project(u: SpectralField) -> SpectralField:
    """Remove the component parallel to the dual wave vector, mode by mode."""
    c = np.einsum("mij,mj->mi", u.lattice.proj, u.coeffs)
    return SpectralField(u.lattice, c, u.mean)


def apply_A_power(u: SpectralField, alpha: float) -> SpectralField:
    """Fractional Stokes power: multiply each mode by lam^alpha (mean dropped)."""
    c = u.coeffs * u.lattice.lam_f[:, None] ** alpha
    return SpectralField(u.lattice, c)


def apply_exp_sqrtA(u: SpectralField, sigma: float) -> SpectralField:
    c = u.coeffs * np.exp(sigma * np.sqrt(u.lattice.lam_f))[:, None]
    return SpectralField(u.lattice, c, u.mean)


_J_VERT = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])


def apply_S(u: SpectralField) -> SpectralField:
    """Coriolis operator: Leray-projected vertical rotation P J P, mode-wise."""
    inner_p = np.einsum("mij,mj->mi", u.lattice.proj, u.coeffs)
    c = np.einsum("mij,mj->mi", u.lattice.proj, inner_p @ _J_VERT.T)
    return SpectralField(u.lattice, c)


def _rotate_coeffs(lattice: Lattice, coeffs: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Apply cos(theta_m) I + sin(theta_m) J_k per mode; theta has shape (M,)."""
    rot = np.einsum("mij,mj->mi", lattice.jk, coeffs)
    return np.cos(theta)[:, None] * coeffs + np.sin(theta)[:, None] * rot


def apply_expS(u: SpectralField, t: float) -> SpectralField:
    """Rotation-wave group exp(t*S): plane rotation by k3til*t in each mode plane."""
    c = _rotate_coeffs(u.lattice, u.coeffs, u.lattice.kt3 * t)
    return SpectralField(u.lattice, c, u.mean)


# -- bilinear form ----------------------------------------------------------

def _conv_pairs(lattice: Lattice):
    """Index triples (m, j, out) with k_m + k_j = k_out, all retained.  Cached."""
    cached = getattr(lattice, "_conv_pairs", None)
    if cached is not None:
        return cached
    im, ij, io = [], [], []
    index = lattice.mode_index
    ks = lattice.ks
    for a in range(lattice.n_modes):
        ka = ks[a]
        for b in range(lattice.n_modes):
            ko = (int(ka[0] + ks[b, 0]), int(ka[1] + ks[b, 1]), int(ka[2] + ks[b, 2]))
            o = index.get(ko)
            if o is not None:
                im.append(a)
                ij.append(b)
                io.append(o)
    pairs = (np.array(im, dtype=int), np.array(ij, dtype=int), np.array(io, dtype=int))
    lattice._conv_pairs = pairs
    return pairs


def _conv_plan(lattice: Lattice, rep_only: bool):
    """Row-sorted pair structure for the direct convolution.  Cached per lattice.

    rep_only keeps pairs whose output is a representative mode; valid when
    both inputs obey the conjugate pairing, with the other half mirrored.
    """
    attr = "_conv_plan_rep" if rep_only else "_conv_plan_full"
    cached = getattr(lattice, attr, None)
    if cached is not None:
        return cached
    im, ij, io = _conv_pairs(lattice)
    if rep_only:
        keep = lattice.rep_mask[io]
        im, ij, io = im[keep], ij[keep], io[keep]
    order = np.argsort(io, kind="stable")
    im, ij, io = im[order], ij[order], io[order]
    plan = (
        im,
        ij,
        lattice.kcheck[io],  # gather of the output wave vectors, (P,3)
        np.r_[0, np.cumsum(np.bincount(io, minlength=lattice.n_modes))],
    )
    setattr(lattice, attr, plan)
    return plan


def convolve_advect(lattice: Lattice, U: np.ndarray, V: np.ndarray,
                    assume_real_pairing: bool = False) -> np.ndarray:
    """Raw advection coefficients of (u.grad)v, truncated to the lattice.

    Zero-mean inputs; returns the un-projected (M,3) array
    b_k = sum_{m+j=k} i (U_m . kcheck_k) V_j, accumulated as a sparse
    matrix-vector product over the precomputed pair list.  With
    assume_real_pairing the sum runs over representative outputs only and
    the conjugate half is mirrored (exact when U, V are real-paired).
    """
    im, ij, kc, indptr = _conv_plan(lattice, assume_real_pairing)
    M = lattice.n_modes
    dots = (U[im] * kc).sum(axis=1)
    S = sp.csr_matrix((dots, ij, indptr), shape=(M, M))
    out = 1j * (S @ V)
    if assume_real_pairing:
        rep = lattice.rep_mask
        out[lattice.conj_idx[rep]] = np.conj(out[rep])
    return out


def bilinear_B(u: SpectralField, v: SpectralField) -> SpectralField:
    """Leray-projected advection B(u, v) = P (u.grad) v on the Galerkin set."""
    raw = convolve_advect(u.lattice, u.coeffs, v.coeffs)
    c = np.einsum("mij,mj->mi", u.lattice.proj, raw)
    return SpectralField(u.lattice, c)


def bilinear_B_omega(t: float, u: SpectralField, v: SpectralField, omega: float) -> SpectralField:
    """Rotated bilinear form exp(Omega t S) B(exp(-Omega t S)u, exp(-Omega t S)v)."""
    lat = u.lattice
    theta = -omega * lat.kt3 * t
    cu = _rotate_coeffs(lat, u.coeffs, theta)
    cv = _rotate_coeffs(lat, v.coeffs, theta)
    raw = convolve_advect(lat, cu, cv)
    c = np.einsum("mij,mj->mi", lat.proj, raw)
    return SpectralField(lat, _rotate_coeffs(lat, c, -theta))


def eigen_restrict(u: SpectralField, lam: Fraction | int | str) -> SpectralField:
    """Eigenprojection onto a single Stokes shell."""
    idx = u.lattice.shell_indices(Fraction(lam))
    c = np.zeros_like(u.coeffs)
    c[idx] = u.coeffs[idx]
    return SpectralField(u.lattice, c)


def low_pass(u: SpectralField, lam: Fraction | int | str) -> SpectralField:
    """Spectral projection onto all shells with eigenvalue <= lam."""
    lam = Fraction(lam)
    mask = np.array([l <= lam for l in u.lattice.lam])
    c = np.where(mask[:, None], u.coeffs, 0.0)
    return SpectralField(u.lattice, c, u.mean)


def random_gevrey(lattice: Lattice, seed: int, sigma: float = 1.0,
                  amplitude: float = 0.1) -> SpectralField:
    """Seeded random divergence-free field with exponentially decaying shells.

    Coefficients are drawn per representative mode, Leray-projected, damped
    by exp(-sigma sqrt(lam)), mirrored to the conjugate modes and scaled so
    the L2 norm equals `amplitude`.  Deterministic in (lattice, seed, sigma).
    """
    rng = np.random.default_rng(seed)
    u = SpectralField(lattice)
    for i in range(lattice.n_modes):
        if not lattice.rep_mask[i]:
            continue
        z = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        z = lattice.proj[i] @ z
        z *= math.exp(-sigma * math.sqrt(lattice.lam_f[i]))
        u.coeffs[i] = z
        u.coeffs[lattice.conj_idx[i]] = np.conj(z)
    n = gevrey_norm(u)
    if n > 0:
        u.coeffs *= amplitude / n
    return u


# -- JSON interchange -------------------------------------------------------

def field_to_json(u: SpectralField) -> str:
    """One representative per conjugate pair, deterministic order."""
    lat = u.lattice
    modes = []
    for i in range(lat.n_modes):
        if not lat.rep_mask[i]:
            continue
        z = u.coeffs[i]
        if not np.any(z):
            continue
        modes.append({
            "k": [int(c) for c in lat.ks[i]],
            "re": [float(x) for x in z.real],
            "im": [float(x) for x in z.imag],
        })
    doc = {
        "L": [float(x) for x in lat.L],
        "mean": [float(x) for x in u.mean],
        "modes": modes,
    }
    return json.dumps(doc, sort_keys=True)


def field_from_json(text: str, lattice: Optional[Lattice] = None) -> SpectralField:
    """Inverse of field_to_json.

    With no lattice supplied, builds the smallest one covering the stored
    modes (periods recovered as exact rationals of 2*pi).
    """
    doc = json.loads(text)
    if lattice is None:
        from .lattice import rationalize_period
        ell = [rationalize_period(x) for x in doc["L"]]
        q = [1 / (e * e) for e in ell]
        cutoff = Fraction(1)
        for m in doc["modes"]:
            k = m["k"]
            lam = sum(qq * int(c) * int(c) for qq, c in zip(q, k))
            cutoff = max(cutoff, lam)
        lattice = Lattice(ell, cutoff)
    modes = {
        tuple(int(c) for c in m["k"]): np.array(m["re"], dtype=float) + 1j * np.array(m["im"], dtype=float)
        for m in doc["modes"]
    }
    return SpectralField.from_modes(lattice, modes, mean=doc.get("mean"))
