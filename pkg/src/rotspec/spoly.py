"""Oscillating-polynomial algebra over spectral fields.

Terms are complex exponentials t^m exp(i w t) c attached to a lattice mode;
real trigonometric sums arise through the conjugate pairing
(-k, m, -w, conj(c)).  Frequencies are formal: exact rational combinations
over square roots of squarefree integers (the rotation lattice contributes
Omega * k3til, and sqrt(k3^2/|k|^2) rationalizes to (a/q) sqrt(s)), plus
ad-hoc generators for caller-supplied values.  Distinct formal keys are
never merged on numeric proximity; near-coincidences are warned about.

The second family multiplies each term with a unimodular phase
exp(-i (a cos(wp t) + b sin(wp t) + c t + d)) as produced by mean-drift
coordinate shifts.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .lattice import Lattice, squarefree_decompose
from .fields import SpectralField

__all__ = [
    "Frequency",
    "ScalarSPoly",
    "SPoly",
    "SSPoly",
    "Phase",
    "integrate_term",
    "ode_solve",
    "apply_expS_spoly",
    "bilinear_spoly",
    "sspoly_phase_shift",
    "OdeResonanceError",
    "spoly_to_json",
    "spoly_from_json",
]

COLLISION_TOL = 1e-9


class OdeResonanceError(ValueError):
    """A numerically degenerate gamma = beta + i*omega that is not an exact resonance."""


# ---------------------------------------------------------------------------
# formal frequencies


class Frequency:
    """Exact rational combination of frequency generators.

    Each component is (key, coef, unit): `key` identifies the generator
    (("rot", s) for Omega*sqrt(s), s squarefree, or ("user", num, den) for an
    ad-hoc value), `coef` is a Fraction and `unit` the generator's numeric
    value.  Equality and hashing use only (key, coef); numeric value is the
    exact sum coef*unit.
    """

    __slots__ = ("parts", "value")

    def __init__(self, parts: Iterable[Tuple[tuple, Fraction, float]] = ()):
        merged: Dict[tuple, Tuple[Fraction, float]] = {}
        for key, coef, unit in parts:
            coef = Fraction(coef)
            if key in merged:
                old_coef, old_unit = merged[key]
                if abs(old_unit - unit) > 1e-12 * max(1.0, abs(unit)):
                    raise ValueError(
                        f"generator {key} seen with two different values "
                        f"({old_unit} vs {unit}); frequencies from different "
                        "rotation rates cannot be combined"
                    )
                coef = coef + old_coef
            merged[key] = (coef, unit)
        self.parts = tuple(
            (key, coef, unit)
            for key, (coef, unit) in sorted(merged.items())
            if coef != 0
        )
        self.value = float(sum(float(coef) * unit for _, coef, unit in self.parts))

    @staticmethod
    def zero() -> "Frequency":
        return _FREQ_ZERO

    @staticmethod
    def rotation(sqfree: int, coef: Fraction, omega: float) -> "Frequency":
        """coef * |omega| * sqrt(sqfree), sign carried by coef."""
        if coef == 0 or omega == 0.0:
            return _FREQ_ZERO
        sgn = 1 if omega > 0 else -1
        return Frequency(
            [(("rot", sqfree), Fraction(coef) * sgn, abs(omega) * math.sqrt(sqfree))]
        )

    @staticmethod
    def user(value: float) -> "Frequency":
        if value == 0.0:
            return _FREQ_ZERO
        f = Fraction(abs(value))
        sgn = 1 if value > 0 else -1
        return Frequency([(("user", f.numerator, f.denominator), Fraction(sgn), abs(value))])

    @property
    def is_zero(self) -> bool:
        return not self.parts

    def __add__(self, other: "Frequency") -> "Frequency":
        if not other.parts:
            return self
        if not self.parts:
            return other
        return Frequency(list(self.parts) + list(other.parts))

    def __neg__(self) -> "Frequency":
        f = Frequency.__new__(Frequency)
        f.parts = tuple((key, -coef, unit) for key, coef, unit in self.parts)
        f.value = -self.value
        return f

    def __sub__(self, other: "Frequency") -> "Frequency":
        return self + (-other)

    def scale(self, factor: Fraction | int) -> "Frequency":
        factor = Fraction(factor)
        if factor == 0:
            return _FREQ_ZERO
        return Frequency([(key, coef * factor, unit) for key, coef, unit in self.parts])

    def _id(self):
        return tuple((key, coef) for key, coef, _ in self.parts)

    def __eq__(self, other):
        return isinstance(other, Frequency) and self._id() == other._id()

    def __hash__(self):
        return hash(self._id())

    def __lt__(self, other: "Frequency"):
        return self._id() < other._id()

    def __repr__(self):
        if not self.parts:
            return "Frequency(0)"
        bits = "+".join(f"{coef}*{key}" for key, coef, _ in self.parts)
        return f"Frequency({bits}={self.value:.6g})"


_FREQ_ZERO = Frequency.__new__(Frequency)
_FREQ_ZERO.parts = ()
_FREQ_ZERO.value = 0.0


def mode_rotation_frequency(lattice: Lattice, mode: int, omega: float) -> Frequency:
    """Elementary frequency Omega*k3til for one lattice mode (zero if k3 = 0)."""
    return Frequency.rotation(lattice.freq_sqfree[mode], lattice.freq_coef[mode], omega)


# ---------------------------------------------------------------------------
# closed-form antiderivative of t^m e^{at} {cos,sin}(wt)


def integrate_term(m: int, alpha: float, omega: float) -> np.ndarray:
    """Coefficient matrices of the closed-form antiderivative.

    Returns C with shape (m+1, 2, 2) such that, writing
    I(t) = (e^{alpha t} cos(omega t), e^{alpha t} sin(omega t))^T,

        integral t^m I(t) dt = sum_n t^n  C[n] I(t)   (+ constant),

    with C[n] = (-1)^(m-n) (m!/n!) * Dm1^(m+1-n) and Dm1 the inverse
    derivative matrix [[alpha, omega], [-omega, alpha]] / (alpha^2+omega^2).
    Requires alpha^2 + omega^2 > 0; the pure power t^m has no such form.
    """
    if m < 0:
        raise ValueError("degree must be >= 0")
    denom = alpha * alpha + omega * omega
    if denom == 0.0:
        raise ValueError("alpha = omega = 0: antiderivative is the monomial t^(m+1)/(m+1)")
    dm1 = np.array([[alpha, omega], [-omega, alpha]]) / denom
    out = np.empty((m + 1, 2, 2))
    fact = 1.0  # m!/n!, built downward from n = m
    for n in range(m, -1, -1):
        sign = -1.0 if (m - n) % 2 else 1.0
        out[n] = sign * fact * np.linalg.matrix_power(dm1, m + 1 - n)
        if n > 0:
            fact *= n
    return out


# ---------------------------------------------------------------------------
# scalar polynomials (multipliers)


class ScalarSPoly:
    """Scalar-valued oscillating polynomial: {(m, freq): complex amplitude}."""

    def __init__(self, terms: Optional[Dict[Tuple[int, Frequency], complex]] = None):
        self.terms: Dict[Tuple[int, Frequency], complex] = {}
        if terms:
            for key, z in terms.items():
                if z != 0:
                    self.terms[key] = self.terms.get(key, 0.0) + z

    @staticmethod
    def constant(z: complex) -> "ScalarSPoly":
        return ScalarSPoly({(0, Frequency.zero()): z})

    @staticmethod
    def monomial(m: int, z: complex = 1.0) -> "ScalarSPoly":
        return ScalarSPoly({(m, Frequency.zero()): z})

    @staticmethod
    def cosine(freq: Frequency, amplitude: float = 1.0) -> "ScalarSPoly":
        return ScalarSPoly({(0, freq): 0.5 * amplitude, (0, -freq): 0.5 * amplitude})

    @staticmethod
    def sine(freq: Frequency, amplitude: float = 1.0) -> "ScalarSPoly":
        return ScalarSPoly({(0, freq): -0.5j * amplitude, (0, -freq): 0.5j * amplitude})

    def __call__(self, t: float) -> complex:
        return sum(z * t**m * np.exp(1j * f.value * t) for (m, f), z in self.terms.items())


# ---------------------------------------------------------------------------
# vector-valued polynomials on lattice modes


TermKey = Tuple[Tuple[int, int, int], int, Frequency]


class SPoly:
    """Finite sum of terms t^m exp(i w t) c_k attached to lattice modes.

    The term map is canonical: duplicate keys are merged on construction and
    exactly-zero coefficients dropped.  Reality is a property of the data
    (enforced by the operations, checkable via `reality_error`), not of the
    container.
    """

    __slots__ = ("lattice", "terms")

    def __init__(self, lattice: Lattice,
                 terms: Optional[Dict[TermKey, np.ndarray]] = None,
                 check_collisions: bool = False):
        self.lattice = lattice
        self.terms: Dict[TermKey, np.ndarray] = {}
        if terms:
            for key, c in terms.items():
                c = np.asarray(c, dtype=complex)
                if not np.any(c):
                    continue
                if key in self.terms:
                    s = self.terms[key] + c
                    if np.any(s):
                        self.terms[key] = s
                    else:
                        del self.terms[key]
                else:
                    self.terms[key] = c
        if check_collisions:
            self.warn_collisions()

    # -- constructors -------------------------------------------------------
    @staticmethod
    def zero(lattice: Lattice) -> "SPoly":
        return SPoly(lattice)

    @staticmethod
    def from_field(u: SpectralField, m: int = 0,
                   freq: Optional[Frequency] = None) -> "SPoly":
        """Constant-in-time polynomial t^m e^{iwt} u (freq defaults to 0)."""
        freq = freq or Frequency.zero()
        terms = {}
        for i in range(u.lattice.n_modes):
            c = u.coeffs[i]
            if np.any(c):
                k = tuple(int(x) for x in u.lattice.ks[i])
                terms[(k, m, freq)] = c.copy()
        return SPoly(u.lattice, terms)

    def copy(self) -> "SPoly":
        return SPoly(self.lattice, {k: c.copy() for k, c in self.terms.items()})

    # -- bookkeeping --------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return not self.terms

    def n_terms(self) -> int:
        return len(self.terms)

    def max_abs(self) -> float:
        if not self.terms:
            return 0.0
        return max(float(np.abs(c).max()) for c in self.terms.values())

    def degree(self) -> int:
        return max((m for (_, m, _) in self.terms), default=0)

    def support_lams(self) -> List[Fraction]:
        lams = {self.lattice.lam[self.lattice.mode_index[k]] for (k, _, _) in self.terms}
        return sorted(lams)

    def warn_collisions(self, tol: float = COLLISION_TOL) -> int:
        """Warn about numerically coincident but formally distinct frequencies."""
        groups: Dict[Tuple[Tuple[int, int, int], int], List[Frequency]] = {}
        for (k, m, f) in self.terms:
            groups.setdefault((k, m), []).append(f)
        hits = 0
        for (k, m), fs in groups.items():
            fs = sorted(set(fs), key=lambda f: f.value)
            for a, b in zip(fs, fs[1:]):
                if a != b and abs(a.value - b.value) < tol:
                    hits += 1
                    warnings.warn(
                        f"frequency collision on mode {k}, degree {m}: "
                        f"{a!r} vs {b!r} differ by {abs(a.value - b.value):.2e}; "
                        "keys kept distinct",
                        stacklevel=2,
                    )
        return hits

    def reality_error(self) -> float:
        err = 0.0
        for (k, m, f), c in self.terms.items():
            kk = tuple(-x for x in k)
            partner = self.terms.get((kk, m, -f))
            if partner is None:
                err = max(err, float(np.abs(c).max()))
            else:
                err = max(err, float(np.abs(partner - np.conj(c)).max()))
        return err

    # -- linear structure ---------------------------------------------------
    def __add__(self, other: "SPoly") -> "SPoly":
        terms = {k: c.copy() for k, c in self.terms.items()}
        out = SPoly(self.lattice, terms)
        for key, c in other.terms.items():
            cur = out.terms.get(key)
            s = c if cur is None else cur + c
            if np.any(s):
                out.terms[key] = s.copy() if cur is None else s
            elif cur is not None:
                del out.terms[key]
        return out

    def __sub__(self, other: "SPoly") -> "SPoly":
        return self + other.scale(-1.0)

    def scale(self, a: complex) -> "SPoly":
        if a == 0:
            return SPoly.zero(self.lattice)
        return SPoly(self.lattice, {k: c * a for k, c in self.terms.items()})

    __neg__ = lambda self: self.scale(-1.0)

    def apply_mode_weights(self, weights: np.ndarray) -> "SPoly":
        """Multiply each term by a per-mode scalar weight (e.g. Stokes eigenvalue)."""
        idx = self.lattice.mode_index
        return SPoly(self.lattice, {
            key: c * weights[idx[key[0]]] for key, c in self.terms.items()
        })

    def apply_stokes(self) -> "SPoly":
        return self.apply_mode_weights(self.lattice.lam_f)

    def restrict_shell(self, lam) -> "SPoly":
        lam = Fraction(lam)
        idx = self.lattice.mode_index
        return SPoly(self.lattice, {
            key: c for key, c in self.terms.items()
            if self.lattice.lam[idx[key[0]]] == lam
        })

    # -- reparametrizations --------------------------------------------------
    def time_shift(self, T: float) -> "SPoly":
        """f(t) -> f(t + T), expanded back into canonical terms."""
        if T == 0.0:
            return self.copy()
        out: Dict[TermKey, np.ndarray] = {}
        for (k, m, f), c in self.terms.items():
            base = c * np.exp(1j * f.value * T)
            for n in range(m + 1):
                cn = math.comb(m, n) * T ** (m - n) * base
                key = (k, n, f)
                out[key] = out.get(key, 0.0) + cn
        return SPoly(self.lattice, out)

    def time_dilate(self, kappa) -> "SPoly":
        """f(t) -> f(kappa t); kappa is treated as an exact rational."""
        kf = Fraction(kappa)
        out: Dict[TermKey, np.ndarray] = {}
        for (k, m, f), c in self.terms.items():
            out[(k, m, f.scale(kf))] = c * float(kf) ** m
        return SPoly(self.lattice, out)

    def differentiate(self) -> "SPoly":
        out: Dict[TermKey, np.ndarray] = {}
        for (k, m, f), c in self.terms.items():
            if m >= 1:
                key = (k, m - 1, f)
                out[key] = out.get(key, 0.0) + m * c
            if not f.is_zero:
                key = (k, m, f)
                out[key] = out.get(key, 0.0) + 1j * f.value * c
        return SPoly(self.lattice, out)

    def multiply_scalar(self, g: ScalarSPoly) -> "SPoly":
        out: Dict[TermKey, np.ndarray] = {}
        for (k, m, f), c in self.terms.items():
            for (mg, fg), z in g.terms.items():
                key = (k, m + mg, f + fg)
                out[key] = out.get(key, 0.0) + z * c
        return SPoly(self.lattice, out)

    # -- evaluation ---------------------------------------------------------
    def evaluate(self, t: float) -> SpectralField:
        u = SpectralField(self.lattice)
        idx = self.lattice.mode_index
        for (k, m, f), c in self.terms.items():
            u.coeffs[idx[k]] += (t**m) * np.exp(1j * f.value * t) * c
        return u

    def evaluate_many(self, ts: np.ndarray) -> np.ndarray:
        """Coefficient array of shape (len(ts), M, 3)."""
        ts = np.asarray(ts, dtype=float)
        out = np.zeros((len(ts), self.lattice.n_modes, 3), dtype=complex)
        idx = self.lattice.mode_index
        for (k, m, f), c in self.terms.items():
            series = ts**m * np.exp(1j * f.value * ts)
            out[:, idx[k], :] += series[:, None] * c[None, :]
        return out

    def __repr__(self):
        return f"SPoly(terms={len(self.terms)}, deg={self.degree()}, max={self.max_abs():.3g})"


# ---------------------------------------------------------------------------
# wave-group action and the rotated bilinear form on polynomials


def apply_expS_spoly(f: SPoly, omega: float) -> SPoly:
    """exp(Omega t S) f, expanded into shifted frequencies.

    Per mode, the plane rotation by Omega*k3til*t splits each term into the
    two circular components (c -/+ i J_k c)/2 at frequencies w +/- g_k.
    Modes with k3 = 0 are untouched.
    """
    if omega == 0.0:
        return f.copy()
    lat = f.lattice
    out: Dict[TermKey, np.ndarray] = {}
    idx = lat.mode_index
    for (k, m, w), c in f.terms.items():
        i = idx[k]
        coef = lat.freq_coef[i]
        if coef == 0:
            out[(k, m, w)] = out.get((k, m, w), 0.0) + c
            continue
        g = Frequency.rotation(lat.freq_sqfree[i], coef, omega)
        jc = lat.jk[i] @ c
        plus = 0.5 * (c - 1j * jc)
        minus = 0.5 * (c + 1j * jc)
        for freq, val in ((w + g, plus), (w - g, minus)):
            key = (k, m, freq)
            out[key] = out.get(key, 0.0) + val
    return SPoly(lat, out)


def bilinear_spoly(f: SPoly, g: SPoly, omega: float) -> SPoly:
    """Symbolic rotated advection B_Omega(t, f(t), g(t)) on the Galerkin set."""
    lat = f.lattice
    fr = apply_expS_spoly(f, -omega)
    gr = apply_expS_spoly(g, -omega)
    out: Dict[TermKey, np.ndarray] = {}
    idx = lat.mode_index
    for (k1, m1, w1), c1 in fr.terms.items():
        for (k2, m2, w2), c2 in gr.terms.items():
            ko = (k1[0] + k2[0], k1[1] + k2[1], k1[2] + k2[2])
            o = idx.get(ko)
            if o is None:
                continue
            dot = 1j * np.dot(c1, lat.kcheck[o])
            if dot == 0:
                continue
            val = dot * (lat.proj[o] @ c2)
            key = (ko, m1 + m2, w1 + w2)
            out[key] = out.get(key, 0.0) + val
    return apply_expS_spoly(SPoly(lat, out), omega)


# ---------------------------------------------------------------------------
# the three-branch mode ODE  q' + beta q = p


def ode_solve(beta, p: SPoly, xi0: Optional[SpectralField] = None) -> SPoly:
    """Unique decaying/bounded polynomial solution of q' + beta*q = p.

    beta > 0 and beta < 0 give the unique polynomial solution (growing or
    decaying homogeneous parts excluded); beta = 0 integrates from 0 and
    pins q(0) = xi0 on every mode (xi0 defaults to zero).  The resonance
    test beta == 0 is exact when beta is a Fraction/int.  A pure-power term
    with beta = 0 raises the degree (monomial rule); any other numerically
    vanishing gamma = beta + i w is rejected.
    """
    lat = p.lattice
    resonant = beta == 0
    bf = float(beta)
    out: Dict[TermKey, np.ndarray] = {}

    def add(key, val):
        out[key] = out.get(key, 0.0) + val

    for (k, m, w), c in p.terms.items():
        if resonant and w.is_zero:
            add((k, m + 1, w), c / (m + 1))
            continue
        gamma = bf + 1j * w.value
        if abs(gamma) < 1e-9 * max(1.0, abs(bf)):
            raise OdeResonanceError(
                f"gamma = beta + i*omega = {gamma} is numerically degenerate for "
                f"term (k={k}, m={m}, w={w!r}) but not an exact resonance"
            )
        a = c / gamma
        add((k, m, w), a)
        for n in range(m - 1, -1, -1):
            a = -(n + 1) * a / gamma
            add((k, n, w), a)

    q = SPoly(lat, out)
    if resonant:
        # pin q(0): add a constant on each mode so initial data matches xi0
        target = np.zeros((lat.n_modes, 3), dtype=complex)
        if xi0 is not None:
            target = xi0.coeffs.astype(complex)
        init = q.evaluate(0.0).coeffs
        delta = target - init
        extra: Dict[TermKey, np.ndarray] = {}
        for i in range(lat.n_modes):
            d = delta[i]
            if np.any(d):
                k = tuple(int(x) for x in lat.ks[i])
                extra[(k, 0, Frequency.zero())] = d
        q = q + SPoly(lat, extra)
    return q


def antiderivative(p: SPoly) -> SPoly:
    """The antiderivative F with F(0) = 0 (closed form, exact)."""
    return ode_solve(0, p)


# ---------------------------------------------------------------------------
# drift phases


@dataclass(frozen=True)
class Phase:
    """Unimodular factor exp(-i (a cos(wp t) + b sin(wp t) + c t + d))."""

    a: float
    b: float
    c: float
    d: float
    pfreq: Frequency

    def __call__(self, t):
        arg = (self.a * np.cos(self.pfreq.value * t)
               + self.b * np.sin(self.pfreq.value * t)
               + self.c * t + self.d)
        return np.exp(-1j * arg)

    def negate(self) -> "Phase":
        return Phase(-self.a, -self.b, -self.c, -self.d, self.pfreq)


_PHASE_ONE = Phase(0.0, 0.0, 0.0, 0.0, _FREQ_ZERO)

SSTermKey = Tuple[Tuple[int, int, int], int, Frequency, Phase]


class SSPoly:
    """Oscillating polynomial with per-term drift phases."""

    __slots__ = ("lattice", "terms")

    def __init__(self, lattice: Lattice,
                 terms: Optional[Dict[SSTermKey, np.ndarray]] = None):
        self.lattice = lattice
        self.terms: Dict[SSTermKey, np.ndarray] = {}
        if terms:
            for key, c in terms.items():
                c = np.asarray(c, dtype=complex)
                if not np.any(c):
                    continue
                if key in self.terms:
                    self.terms[key] = self.terms[key] + c
                else:
                    self.terms[key] = c

    @staticmethod
    def from_spoly(f: SPoly) -> "SSPoly":
        return SSPoly(f.lattice, {
            (k, m, w, _PHASE_ONE): c.copy() for (k, m, w), c in f.terms.items()
        })

    def __add__(self, other: "SSPoly") -> "SSPoly":
        terms = {k: c.copy() for k, c in self.terms.items()}
        for key, c in other.terms.items():
            terms[key] = terms.get(key, 0.0) + c
        return SSPoly(self.lattice, terms)

    def scale(self, a: complex) -> "SSPoly":
        return SSPoly(self.lattice, {k: c * a for k, c in self.terms.items()})

    def evaluate(self, t: float) -> SpectralField:
        u = SpectralField(self.lattice)
        idx = self.lattice.mode_index
        for (k, m, w, ph), c in self.terms.items():
            u.coeffs[idx[k]] += (t**m) * np.exp(1j * w.value * t) * ph(t) * c
        return u

    def evaluate_many(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        out = np.zeros((len(ts), self.lattice.n_modes, 3), dtype=complex)
        idx = self.lattice.mode_index
        for (k, m, w, ph), c in self.terms.items():
            series = ts**m * np.exp(1j * w.value * ts) * ph(ts)
            out[:, idx[k], :] += series[:, None] * c[None, :]
        return out

    def reality_error(self) -> float:
        err = 0.0
        for (k, m, w, ph), c in self.terms.items():
            kk = tuple(-x for x in k)
            partner = self.terms.get((kk, m, -w, ph.negate()))
            if partner is None:
                err = max(err, float(np.abs(c).max()))
            else:
                err = max(err, float(np.abs(partner - np.conj(c)).max()))
        return err

    def n_terms(self) -> int:
        return len(self.terms)

    def __repr__(self):
        return f"SSPoly(terms={len(self.terms)})"


def sspoly_phase_shift(f: SPoly, U0: Sequence[float], omega: float) -> SSPoly:
    """Attach the mean-drift phase exp(-i kcheck . V(t)) to every term.

    For omega != 0 the drift integral V(t) makes kcheck.V(t) =
    r1 cos(Omega t) + r2 sin(Omega t) + r3 t + r4 with

        r1 = -(kc1 U2 - kc2 U1)/Omega = -r4,  r2 = (kc1 U1 + kc2 U2)/Omega,
        r3 = kc3 U3.

    At omega = 0 the drift is the straight line U0*t and the phase is
    purely linear.
    """
    U0 = np.asarray(U0, dtype=float)
    lat = f.lattice
    idx = lat.mode_index
    out: Dict[SSTermKey, np.ndarray] = {}
    if omega != 0.0:
        pfreq = Frequency.rotation(1, Fraction(1), omega)
    else:
        pfreq = Frequency.zero()
    for (k, m, w), c in f.terms.items():
        kc = lat.kcheck[idx[k]]
        if omega != 0.0:
            cross = kc[0] * U0[1] - kc[1] * U0[0]
            ph = Phase(
                a=-cross / omega,
                b=(kc[0] * U0[0] + kc[1] * U0[1]) / omega,
                c=kc[2] * U0[2],
                d=cross / omega,
                pfreq=pfreq,
            )
        else:
            ph = Phase(0.0, 0.0, float(np.dot(kc, U0)), 0.0, pfreq)
        out[(k, m, w, ph)] = out.get((k, m, w, ph), 0.0) + c
    return SSPoly(lat, out)


# ---------------------------------------------------------------------------
# JSON interchange


def _freq_doc(f: Frequency) -> dict:
    combo = []
    for key, coef, unit in f.parts:
        if key[0] == "rot":
            combo.append({"kind": "rot", "s": key[1], "coef": str(coef), "unit": unit})
        else:
            combo.append({"kind": "user", "num": key[1], "den": key[2],
                          "coef": str(coef), "unit": unit})
    return {"combo": combo, "value": f.value}


def _freq_from_doc(doc: dict) -> Frequency:
    parts = []
    for c in doc["combo"]:
        if c["kind"] == "rot":
            parts.append((("rot", int(c["s"])), Fraction(c["coef"]), float(c["unit"])))
        else:
            parts.append((("user", int(c["num"]), int(c["den"])),
                          Fraction(c["coef"]), float(c["unit"])))
    return Frequency(parts)


def spoly_to_json(f: SPoly) -> str:
    terms = []
    for (k, m, w), c in sorted(f.terms.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
        terms.append({
            "k": list(k),
            "m": m,
            "omega": _freq_doc(w),
            "re": [float(x) for x in c.real],
            "im": [float(x) for x in c.imag],
        })
    doc = {
        "L": [float(x) for x in f.lattice.L],
        "cutoff": str(f.lattice.cutoff),
        "terms": terms,
    }
    return json.dumps(doc, sort_keys=True)


def spoly_from_json(text: str, lattice: Lattice) -> SPoly:
    doc = json.loads(text)
    terms: Dict[TermKey, np.ndarray] = {}
    for td in doc["terms"]:
        key = (tuple(int(x) for x in td["k"]), int(td["m"]), _freq_from_doc(td["omega"]))
        c = np.array(td["re"], dtype=float) + 1j * np.array(td["im"], dtype=float)
        terms[key] = terms.get(key, 0.0) + c
    return SPoly(lattice, terms)
