"""Normal-ordered polynomial Hamiltonians.

A Hamiltonian is stored as a sparse table of coefficients ``K[m, n]`` of
``a^dag^m a^n``. Its classical symbol is ``K(z) = sum K[m, n] conj(z)^m z^n``
with ``z = (q + i p) / sqrt(2)``. We split ``K = H + i Gamma`` with
``H = Re K`` the Hermitian part and ``Gamma = (K - K^*) / 2i = Im K`` the local
norm growth rate (negative means decay).

The characteristics of the classical Husimi equation are

    zeta_dot = -i dK^*/dzeta^* = -i conj(dK/dzeta)

which in real coordinates reads ``q_dot = dH/dp - dGamma/dq`` and
``p_dot = -dH/dq - dGamma/dp``. All derivatives are taken analytically by
shifting exponents of the coefficient table.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np
from scipy.special import gammaln

__all__ = [
    "PhasePoint",
    "Hamiltonian",
    "build_hamiltonian",
    "classical_symbol",
    "hermitian_part",
    "gamma",
    "flow_velocity",
    "adjoint",
    "fock_matrix",
    "harmonic_oscillator",
    "complex_harmonic_oscillator",
    "damped_anharmonic_oscillator",
    "pt_anharmonic_oscillator",
]

SQRT2 = math.sqrt(2.0)
SQRT_HALF = math.sqrt(0.5)


@dataclass(frozen=True)
class PhasePoint:
    """A point of the real phase plane."""

    q: float
    p: float

    @property
    def z(self) -> complex:
        return complex(self.q, self.p) * SQRT_HALF

    @classmethod
    def from_z(cls, z: complex) -> "PhasePoint":
        """Inverse of ``z``; picks the preimage that maps back to ``z`` exactly."""
        z = complex(z)
        return cls(_unscale(z.real), _unscale(z.imag))


def _unscale(x: float) -> float:
    # x * sqrt(2) can be off by an ulp or two; search the neighbours for a
    # value whose forward image is x, nearest first
    guess = x * SQRT2
    if not math.isfinite(guess) or guess * SQRT_HALF == x:
        return guess
    below = above = guess
    for _ in range(3):
        below, above = math.nextafter(below, -math.inf), math.nextafter(above, math.inf)
        for cand in (below, above):
            if cand * SQRT_HALF == x:
                return cand
    return guess


def _powers(x, k):
    # out[j] = x**j by repeated multiplication; out[0] is None (unit)
    out = [None] * (k + 1)
    if k >= 1:
        out[1] = x
    for j in range(2, k + 1):
        out[j] = out[j - 1] * x
    return out


def _eval_terms(terms, z):
    """Evaluate ``sum c conj(z)^m z^n`` for a list of ``(m, n, c)``."""
    if not terms:
        return np.zeros_like(z, dtype=complex) if isinstance(z, np.ndarray) else 0j
    top_m = max(t[0] for t in terms)
    top_n = max(t[1] for t in terms)
    zs = z.conjugate()
    zc_pows = _powers(zs, top_m)
    z_pows = _powers(z, top_n)
    acc = None
    for m, n, c in terms:
        a, b = zc_pows[m], z_pows[n]
        if a is None and b is None:
            term = c
        elif a is None:
            term = c * b
        elif b is None:
            term = c * a
        else:
            term = c * (a * b)
        acc = term if acc is None else acc + term
    if isinstance(z, np.ndarray) and not isinstance(acc, np.ndarray):
        acc = np.full(z.shape, acc, dtype=complex)
    return acc


def _eval_pair(terms_a, terms_b, z):
    """Evaluate two monomial tables at ``z`` sharing the power tables."""
    both = terms_a + terms_b
    if not both:
        return _eval_terms([], z), _eval_terms([], z)
    zs = z.conjugate()
    zc_pows = _powers(zs, max(t[0] for t in both))
    z_pows = _powers(z, max(t[1] for t in both))
    out = []
    for terms in (terms_a, terms_b):
        acc = None
        for m, n, c in terms:
            a, b = zc_pows[m], z_pows[n]
            if a is None and b is None:
                term = c
            elif a is None:
                term = c * b
            elif b is None:
                term = c * a
            else:
                term = c * (a * b)
            acc = term if acc is None else acc + term
        if acc is None:
            acc = 0j
        if isinstance(z, np.ndarray) and not isinstance(acc, np.ndarray):
            acc = np.full(z.shape, acc, dtype=complex)
        out.append(acc)
    return out[0], out[1]


def _shift(terms, dm, dn):
    # d^dm/dz*^dm d^dn/dz^dn of the monomial table
    out = []
    for m, n, c in terms:
        if m < dm or n < dn:
            continue
        f = math.perm(m, dm) * math.perm(n, dn)
        out.append((m - dm, n - dn, c * f))
    return out


class Hamiltonian:
    """Immutable normal-ordered operator ``sum K[m, n] a^dag^m a^n``.

    Parameters
    ----------
    terms : mapping
        ``{(m, n): coefficient}``. Zero coefficients are dropped.
    """

    __slots__ = ("_terms", "_list", "_d", "_dz", "_dzs", "_hermitian")

    def __init__(self, terms: Mapping[tuple[int, int], complex] | None = None):
        clean = {}
        for (m, n), c in (terms or {}).items():
            m, n, c = int(m), int(n), complex(c)
            if m < 0 or n < 0:
                raise ValueError(f"negative exponent in term ({m}, {n})")
            if c != 0:
                clean[(m, n)] = c
        self._terms = MappingProxyType(dict(sorted(clean.items())))
        self._list = [(m, n, c) for (m, n), c in self._terms.items()]
        # dK/dz and its two second derivatives, used by the flow and Newton
        self._d = _shift(self._list, 0, 1)
        self._dz = _shift(self._d, 0, 1)
        self._dzs = _shift(self._d, 1, 0)
        # Gamma vanishes identically; skip the rounding noise of Im K
        self._hermitian = all(
            self._terms.get((n, m), 0j) == c.conjugate() for (m, n), c in self._terms.items()
        )

    @property
    def terms(self) -> Mapping[tuple[int, int], complex]:
        return self._terms

    @property
    def max_degree(self) -> int:
        return max((m + n for m, n in self._terms), default=0)

    @property
    def min_truncation(self) -> int:
        """Smallest ``n_max`` at which every term acts on the kept block."""
        return max((max(m, n) for m, n in self._terms), default=0)

    def __eq__(self, other):
        if not isinstance(other, Hamiltonian):
            return NotImplemented
        return dict(self._terms) == dict(other._terms)

    def __hash__(self):
        return hash(tuple(self._terms.items()))

    def __repr__(self):
        body = ", ".join(f"({m},{n}): {c!r}" for (m, n), c in self._terms.items())
        return f"Hamiltonian({{{body}}})"

    def __add__(self, other: "Hamiltonian") -> "Hamiltonian":
        merged = dict(self._terms)
        for key, c in other._terms.items():
            merged[key] = merged.get(key, 0) + c
        return Hamiltonian(merged)

    def __neg__(self) -> "Hamiltonian":
        return Hamiltonian({k: -c for k, c in self._terms.items()})

    def is_hermitian(self) -> bool:
        return self._hermitian

    def adjoint(self) -> "Hamiltonian":
        return Hamiltonian({(n, m): c.conjugate() for (m, n), c in self._terms.items()})

    def digest(self) -> str:
        """Short stable hash of the coefficient table."""
        text = ";".join(f"{m},{n},{c.real!r},{c.imag!r}" for (m, n), c in self._terms.items())
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    # -- classical symbol, vectorized over complex z ----------------------

    def symbol(self, z):
        """Classical symbol ``K`` at complex phase-space points ``z``."""
        return _eval_terms(self._list, z)

    def hermitian_symbol(self, z):
        return np.real(self.symbol(z))

    def gamma_symbol(self, z):
        if self._hermitian:
            return np.zeros(z.shape) if isinstance(z, np.ndarray) else 0.0
        return np.imag(self.symbol(z))

    def dsymbol_dz(self, z):
        return _eval_terms(self._d, z)

    def zeta_velocity(self, z):
        """Characteristic velocity ``-i conj(dK/dz)`` in the complex plane."""
        d = _eval_terms(self._d, z)
        return -1j * d.conjugate()

    def characteristic_rhs(self, z):
        """Velocity ``zeta_dot`` and norm rate ``2 Gamma`` at ``z`` in one pass."""
        if self._hermitian:
            d = _eval_terms(self._d, z)
            rate = np.zeros(z.shape) if isinstance(z, np.ndarray) else 0.0
            return -1j * d.conjugate(), rate
        k, d = _eval_pair(self._list, self._d, z)
        return -1j * d.conjugate(), 2.0 * k.imag

    def velocity(self, z):
        """``q_dot + i p_dot`` at complex points ``z``."""
        return SQRT2 * self.zeta_velocity(z)

    def jacobian(self, z) -> np.ndarray:
        """2x2 Jacobian of ``(q_dot, p_dot)`` with respect to ``(q, p)``."""
        d_z = complex(_eval_terms(self._dz, complex(z)))
        d_zs = complex(_eval_terms(self._dzs, complex(z)))
        dv_dq = -1j * (d_z + d_zs).conjugate()
        dv_dp = -(d_z - d_zs).conjugate()
        return np.array([[dv_dq.real, dv_dp.real], [dv_dq.imag, dv_dp.imag]])

    # -- Fock representation ----------------------------------------------

    def fock_matrix(self, n_max: int) -> np.ndarray:
        """Dense matrix of the operator on ``|0>, ..., |n_max>``.

        Entry ``(k - n + m, k)`` of the term ``a^dag^m a^n`` is
        ``sqrt(k!/(k-n)!) sqrt((k-n+m)!/(k-n)!)``.
        """
        if n_max < self.min_truncation:
            raise ValueError(
                f"n_max={n_max} drops terms of order {self.min_truncation} entirely"
            )
        dim = n_max + 1
        mat = np.zeros((dim, dim), dtype=complex)
        for m, n, c in self._list:
            # j = k - n runs while both k = j + n and j + m stay inside the basis
            j = np.arange(0, dim - max(m, n), dtype=float)
            if (m + n) * math.log(dim + 1) > 600.0:
                logf = 0.5 * (
                    gammaln(j + n + 1) + gammaln(j + m + 1) - 2.0 * gammaln(j + 1)
                )
                factor = np.exp(logf)
            else:
                prod = np.ones_like(j)
                for i in range(1, n + 1):
                    prod *= j + i
                for i in range(1, m + 1):
                    prod *= j + i
                factor = np.sqrt(prod)
            cols = j.astype(int) + n
            rows = j.astype(int) + m
            mat[rows, cols] += c * factor
        return mat

    # -- serialization ------------------------------------------------------

    def to_records(self) -> list[dict]:
        return [
            {"m": m, "n": n, "re": c.real, "im": c.imag}
            for (m, n), c in self._terms.items()
        ]

    @classmethod
    def from_records(cls, records: Iterable[Mapping]) -> "Hamiltonian":
        return build_hamiltonian(
            (r["m"], r["n"], complex(r.get("re", 0.0), r.get("im", 0.0))) for r in records
        )


def build_hamiltonian(terms: Iterable[tuple[int, int, complex]]) -> Hamiltonian:
    """Build a Hamiltonian from ``(m, n, coeff)`` triples; duplicates are summed."""
    merged: dict[tuple[int, int], complex] = {}
    for m, n, c in terms:
        if m < 0 or n < 0:
            raise ValueError(f"negative exponent in term ({m}, {n})")
        merged[(int(m), int(n))] = merged.get((int(m), int(n)), 0j) + complex(c)
    return Hamiltonian(merged)


def classical_symbol(H: Hamiltonian, pt: PhasePoint) -> complex:
    return complex(H.symbol(pt.z))


def hermitian_part(H: Hamiltonian, pt: PhasePoint) -> float:
    return classical_symbol(H, pt).real


def gamma(H: Hamiltonian, pt: PhasePoint) -> float:
    return float(H.gamma_symbol(pt.z))


def flow_velocity(H: Hamiltonian, pt: PhasePoint) -> tuple[float, float]:
    """``(q_dot, p_dot)`` of the characteristic flow at ``pt``."""
    v = complex(H.velocity(pt.z))
    return v.real, v.imag


def adjoint(H: Hamiltonian) -> Hamiltonian:
    return H.adjoint()


def fock_matrix(H: Hamiltonian, n_max: int) -> np.ndarray:
    return H.fock_matrix(n_max)


# -- model Hamiltonians ------------------------------------------------------


def harmonic_oscillator(omega: float = 1.0) -> Hamiltonian:
    """``omega (a^dag a + 1/2)``."""
    return build_hamiltonian([(1, 1, omega), (0, 0, omega / 2)])


def complex_harmonic_oscillator(omega: float = 1.0, gamma: float = 0.15) -> Hamiltonian:
    """``(omega - i gamma)(a^dag a + 1/2)``; ``gamma > 0`` damps."""
    w = complex(omega, -gamma)
    return build_hamiltonian([(1, 1, w), (0, 0, w / 2)])


def damped_anharmonic_oscillator(
    gamma: float = 0.05, beta: float = 0.05, delta: float = 1.0
) -> Hamiltonian:
    """Tilted Mexican hat with damping.

    ``-(1 + i gamma) a^dag a + beta a^dag^2 a^2 + delta/sqrt(2) (a^dag + a)``
    """
    drive = delta * SQRT_HALF
    return build_hamiltonian(
        [(1, 1, complex(-1.0, -gamma)), (2, 2, beta), (1, 0, drive), (0, 1, drive)]
    )


def pt_anharmonic_oscillator(beta: float = 0.25, eps: float = 1.0) -> Hamiltonian:
    """PT-symmetric anharmonic oscillator with a linear gain/loss in ``q``.

    ``a^dag a + beta a^dag^2 a^2 - i eps/sqrt(2) (a^dag + a)``
    """
    drive = -1j * eps * SQRT_HALF
    return build_hamiltonian([(1, 1, 1.0), (2, 2, beta), (1, 0, drive), (0, 1, drive)])
