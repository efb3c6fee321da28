"""Wave-vector lattice, Stokes spectrum and its additive semigroup.

All eigenvalue arithmetic is exact: periods are rational multiples of 2*pi,
so every eigenvalue |k_check|^2 = sum_j q_j k_j^2 is a `fractions.Fraction`
and membership / resonance questions are decided without float comparison.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

TWO_PI = 2.0 * math.pi

__all__ = [
    "Lattice",
    "Mode",
    "SemigroupTable",
    "build_lattice",
    "stokes_spectrum",
    "semigroup_table",
    "squarefree_decompose",
    "spectrum_to_json",
    "rationalize_period",
]


class LatticeError(ValueError):
    """Raised when lattice parameters are rejected (non-rational, wrong normalization)."""


def squarefree_decompose(n: int) -> Tuple[int, int]:
    """Write a positive integer as a^2 * s with s squarefree.

    Returns
    -------
    (a, s) : pair of ints with n == a*a*s and s squarefree.
    """
    if n <= 0:
        raise ValueError("need a positive integer")
    a, s = 1, 1
    d = 2
    m = n
    while d * d <= m:
        e = 0
        while m % d == 0:
            m //= d
            e += 1
        if e:
            a *= d ** (e // 2)
            if e % 2:
                s *= d
        d += 1
    s *= m  # leftover prime
    return a, s


def rationalize_period(x: float, max_den: int = 1000) -> Fraction:
    """Recover the rational ratio L/(2*pi) from a float period.

    Rejects values that are not recognizably rational multiples of 2*pi.
    The denominator bound is deliberately small: with a large bound every
    irrational is shadowed by a continued-fraction convergent inside the
    float tolerance (e.g. sqrt(2) ~ 665857/470832 to 1.6e-12) and the
    rejection branch becomes unreachable.
    """
    r = Fraction(x / TWO_PI).limit_denominator(max_den)
    if r <= 0 or abs(float(r) * TWO_PI - x) > 1e-9 * max(1.0, abs(x)):
        raise LatticeError(
            f"period {x!r} is not a recognizable rational multiple of 2*pi; "
            "pass the ratio L/(2*pi) as a Fraction instead"
        )
    return r


@dataclass(frozen=True)
class Mode:
    """A single wave vector with its precomputed spectral data."""

    k: Tuple[int, int, int]
    lam: Fraction              # |k_check|^2, exact
    kcheck: np.ndarray         # dual wave vector, float (3,)
    ktil: np.ndarray           # unit dual vector, float (3,)
    proj: np.ndarray           # Leray projector I - ktil ktil^T, (3,3)
    jk: np.ndarray             # cross-product matrix z -> ktil x z, (3,3)
    index: int


def _cross_matrix(u: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -u[2], u[1]],
            [u[2], 0.0, -u[0]],
            [-u[1], u[0], 0.0],
        ]
    )


class Lattice:
    """Galerkin wave-vector set for a periodic box with rational anisotropy.

    Periods are L_j = 2*pi*ell_j with ell_j rational, max ell_j = 1 (so the
    smallest Stokes eigenvalue is exactly 1).  Retains every k != 0 with
    lam(k) = sum_j q_j k_j^2 <= cutoff where q_j = 1/ell_j^2.

    Attributes
    ----------
    ks : (M,3) int array of retained wave vectors, sorted by (lam, k).
    lam : list of Fraction, exact eigenvalue per mode.
    lam_f, kcheck, ktil, kt3, proj, jk : float views used by numeric kernels.
    conj_idx : (M,) int, index of -k for each k.
    rep_mask : (M,) bool, True on the lexicographically positive member of
        each +/-k pair (the one serialized to JSON).
    eigenvalues : sorted list of distinct Fractions present on the lattice.
    freq_sqfree, freq_coef : per-mode canonical form of the elementary
        oscillation frequency k3til = (coef) * sqrt(sqfree), exact; coef is 0
        for modes with k3 = 0.
    """

    def __init__(self, ell: Sequence[Fraction | int | str], cutoff: Fraction | int | str):
        ell = tuple(Fraction(e) for e in ell)
        if len(ell) != 3:
            raise LatticeError("need three periods")
        if any(e <= 0 for e in ell):
            raise LatticeError("periods must be positive")
        if max(ell) != 1:
            raise LatticeError(
                "normalization requires max period = 2*pi (max ell_j = 1); "
                f"got ell = {tuple(str(e) for e in ell)}"
            )
        cutoff = Fraction(cutoff)
        if cutoff < 1:
            raise LatticeError("cutoff below the smallest eigenvalue retains nothing")

        self.ell = ell
        self.q = tuple(1 / (e * e) for e in ell)  # exact rationals >= 1
        self.cutoff = cutoff
        self.L = tuple(float(e) * TWO_PI for e in ell)
        self.volume = float(ell[0] * ell[1] * ell[2]) * TWO_PI**3

        ks: List[Tuple[int, int, int]] = []
        lams: List[Fraction] = []
        bounds = [int(math.isqrt(int(cutoff / q))) if cutoff / q >= 1 else 0 for q in self.q]
        for k1 in range(-bounds[0], bounds[0] + 1):
            for k2 in range(-bounds[1], bounds[1] + 1):
                for k3 in range(-bounds[2], bounds[2] + 1):
                    if k1 == 0 and k2 == 0 and k3 == 0:
                        continue
                    lam = self.q[0] * k1 * k1 + self.q[1] * k2 * k2 + self.q[2] * k3 * k3
                    if lam <= cutoff:
                        ks.append((k1, k2, k3))
                        lams.append(lam)
        order = sorted(range(len(ks)), key=lambda i: (lams[i], ks[i]))
        self.ks = np.array([ks[i] for i in order], dtype=int)
        self.lam = [lams[i] for i in order]
        self.n_modes = len(self.lam)

        sq = np.array([math.sqrt(float(q)) for q in self.q])
        self.kcheck = self.ks * sq[None, :]
        self.lam_f = np.array([float(l) for l in self.lam])
        norms = np.sqrt(self.lam_f)
        self.ktil = self.kcheck / norms[:, None]
        self.kt3 = self.ktil[:, 2].copy()
        eye = np.eye(3)
        self.proj = eye[None, :, :] - self.ktil[:, :, None] * self.ktil[:, None, :]
        self.jk = np.array([_cross_matrix(u) for u in self.ktil])

        self.mode_index: Dict[Tuple[int, int, int], int] = {
            tuple(k): i for i, k in enumerate(self.ks)
        }
        self.conj_idx = np.array(
            [self.mode_index[tuple(-k)] for k in self.ks], dtype=int
        )
        self.rep_mask = np.array([self._is_rep(tuple(k)) for k in self.ks])

        self.eigenvalues: List[Fraction] = sorted(set(self.lam))
        eig_pos = {l: i for i, l in enumerate(self.eigenvalues)}
        self.shell_of = np.array([eig_pos[l] for l in self.lam], dtype=int)
        self.multiplicity = [self.lam.count(l) for l in self.eigenvalues]

        # canonical radical form of k3til = kcheck3/|kcheck| = coef*sqrt(sqfree)
        self.freq_sqfree: List[int] = []
        self.freq_coef: List[Fraction] = []
        for i in range(self.n_modes):
            k3 = int(self.ks[i, 2])
            if k3 == 0:
                self.freq_sqfree.append(1)
                self.freq_coef.append(Fraction(0))
                continue
            ratio = (self.q[2] * k3 * k3) / self.lam[i]  # k3til^2, exact in (0,1]
            p, qd = ratio.numerator, ratio.denominator
            a, s = squarefree_decompose(p * qd)
            coef = Fraction(a, qd) * (1 if k3 > 0 else -1)
            self.freq_sqfree.append(s)
            self.freq_coef.append(coef)

    @staticmethod
    def _is_rep(k: Tuple[int, int, int]) -> bool:
        for c in k:
            if c > 0:
                return True
            if c < 0:
                return False
        return False

    def mode(self, k: Sequence[int]) -> Mode:
        i = self.mode_index[tuple(int(c) for c in k)]
        return Mode(
            k=tuple(int(c) for c in self.ks[i]),
            lam=self.lam[i],
            kcheck=self.kcheck[i],
            ktil=self.ktil[i],
            proj=self.proj[i],
            jk=self.jk[i],
            index=i,
        )

    def shell_indices(self, lam: Fraction) -> np.ndarray:
        """Indices of all modes with the given exact eigenvalue."""
        lam = Fraction(lam)
        return np.array([i for i, l in enumerate(self.lam) if l == lam], dtype=int)

    def contains(self, k: Sequence[int]) -> bool:
        return tuple(int(c) for c in k) in self.mode_index

    def __repr__(self):
        return (
            f"Lattice(ell={tuple(str(e) for e in self.ell)}, cutoff={self.cutoff}, "
            f"modes={self.n_modes}, shells={len(self.eigenvalues)})"
        )


def build_lattice(
    L: Sequence[float] | None = None,
    cutoff: Fraction | int | str = 6,
    ell: Sequence[Fraction | int | str] | None = None,
) -> Lattice:
    """Build a lattice either from float periods or from exact ratios L/(2*pi)."""
    if ell is None:
        if L is None:
            ell = (1, 1, 1)
        else:
            ell = [rationalize_period(x) for x in L]
    return Lattice(ell, cutoff)


def stokes_spectrum(lattice: Lattice) -> List[Tuple[Fraction, int]]:
    """Distinct eigenvalues with multiplicities, ascending."""
    return list(zip(lattice.eigenvalues, lattice.multiplicity))


class SemigroupTable:
    """Additive closure of the Stokes spectrum up to a cap.

    mu : sorted list of Fraction, the decay rates mu_1 < mu_2 < ...
    decompositions : per element, list of ordered index pairs (i, j) with
        mu[i] + mu[j] == mu[n]; empty for elements with no two-term splitting.
    """

    def __init__(self, eigenvalues: Sequence[Fraction], cap: Fraction | int | str):
        cap = Fraction(cap)
        base = sorted({Fraction(e) for e in eigenvalues if Fraction(e) <= cap})
        if not base:
            raise LatticeError("no eigenvalues at or below the cap")
        elems = set(base)
        frontier = set(base)
        while frontier:
            fresh = set()
            for x in frontier:
                for y in base:
                    z = x + y
                    if z <= cap and z not in elems:
                        fresh.add(z)
            elems |= fresh
            frontier = fresh
        # closure under sums of *semigroup* elements, not only eigenvalue shifts
        changed = True
        while changed:
            changed = False
            current = sorted(elems)
            for x in current:
                for y in current:
                    z = x + y
                    if z <= cap and z not in elems:
                        elems.add(z)
                        changed = True
        self.cap = cap
        self.eigenvalues = base
        self.mu: List[Fraction] = sorted(elems)
        self.index = {m: n for n, m in enumerate(self.mu)}
        self.decompositions: List[List[Tuple[int, int]]] = []
        for m in self.mu:
            pairs = [
                (i, j)
                for i, a in enumerate(self.mu)
                for j, b in enumerate(self.mu)
                if a + b == m
            ]
            self.decompositions.append(pairs)

    def is_eigenvalue(self, mu: Fraction) -> bool:
        return Fraction(mu) in set(self.eigenvalues)

    def __len__(self):
        return len(self.mu)

    def __repr__(self):
        return f"SemigroupTable(cap={self.cap}, n={len(self.mu)}, mu1={self.mu[0]})"


def semigroup_table(lattice: Lattice, cap: Fraction | int | str | None = None) -> SemigroupTable:
    """Semigroup generated by the lattice spectrum, capped (default: lattice cutoff)."""
    if cap is None:
        cap = lattice.cutoff
    return SemigroupTable(lattice.eigenvalues, cap)


def _frac_json(x: Fraction) -> Dict[str, int]:
    return {"num": x.numerator, "den": x.denominator}


def spectrum_to_json(lattice: Lattice, table: Optional[SemigroupTable] = None) -> str:
    """Serialize eigenvalues (+ optional semigroup with decompositions) to JSON."""
    doc: Dict = {
        "ell": [str(e) for e in lattice.ell],
        "cutoff": str(lattice.cutoff),
        "eigenvalues": [
            {**_frac_json(l), "multiplicity": m}
            for l, m in stokes_spectrum(lattice)
        ],
    }
    if table is not None:
        doc["semigroup"] = [
            {
                "mu": _frac_json(m),
                "decompositions": [[i + 1, j + 1] for i, j in table.decompositions[n]],
            }
            for n, m in enumerate(table.mu)
        ]
    return json.dumps(doc, sort_keys=True)
