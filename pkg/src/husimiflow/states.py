"""Initial states in the Fock basis and on phase space, plus closed forms.

Coherent states use ``|z> = exp(-|z|^2/2) sum z^k / sqrt(k!) |k>``. All
``z^k / sqrt(k!)`` factors are built by running products so nothing
overflows at large truncation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import LeakageExceededError
from .hamiltonian import SQRT2, PhasePoint

__all__ = [
    "FockState",
    "InitialStateSpec",
    "coherent_amplitudes",
    "coherent_state",
    "number_state",
    "coherent_overlap",
    "displaced_fock_husimi",
    "displaced_fock_vector",
    "default_n_max",
    "tail_fraction",
    "complex_ho_husimi_oracle",
    "complex_ho_norm_landscape_oracle",
]

TAIL_LEVELS = 5


def _as_z(pt):
    if isinstance(pt, PhasePoint):
        return pt.z
    return pt


@dataclass(frozen=True, eq=False)
class FockState:
    """Amplitudes on ``|0>, ..., |n_max>``; not assumed normalized."""

    amps: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amps, dtype=complex)
        if amps.ndim != 1 or amps.size < 1:
            raise ValueError("amplitudes must be a non-empty vector")
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @property
    def n_max(self) -> int:
        return self.amps.size - 1

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amps, self.amps).real)

    def normalized(self) -> "FockState":
        return FockState(self.amps / math.sqrt(self.norm2))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "re", "im"])
            for k, a in enumerate(self.amps):
                w.writerow([k, f"{a.real:.17g}", f"{a.imag:.17g}"])

    @classmethod
    def from_csv(cls, path) -> "FockState":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        amps = np.zeros(len(rows), dtype=complex)
        for r in rows:
            amps[int(r["n"])] = complex(float(r["re"]), float(r["im"]))
        return cls(amps)


def coherent_amplitudes(z: complex, n_max: int) -> np.ndarray:
    amps = np.empty(n_max + 1, dtype=complex)
    amps[0] = math.exp(-0.5 * abs(z) ** 2)
    for k in range(1, n_max + 1):
        amps[k] = amps[k - 1] * z / math.sqrt(k)
    return amps


def coherent_state(z, n_max: int) -> FockState:
    return FockState(coherent_amplitudes(complex(_as_z(z)), n_max))


def number_state(n: int, n_max: int) -> FockState:
    amps = np.zeros(n_max + 1, dtype=complex)
    amps[n] = 1.0
    return FockState(amps)


def coherent_overlap(psi: FockState, pt):
    """``<z|psi>`` at a PhasePoint or at complex points ``z`` (any shape)."""
    z = np.asarray(_as_z(pt), dtype=complex)
    zs = z.conjugate()
    term = np.exp(-0.5 * (z.real**2 + z.imag**2)).astype(complex)
    acc = term * psi.amps[0]
    for k in range(1, psi.amps.size):
        term = term * zs * (1.0 / math.sqrt(k))
        acc = acc + term * psi.amps[k]
    return acc[()] if acc.ndim == 0 else acc


def displaced_fock_husimi(n: int, zc: complex, pt):
    """Husimi function ``|z - zc|^(2n) exp(-|z - zc|^2) / n!`` of ``D(zc)|n>``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    z = _as_z(pt)
    r2 = np.abs(np.asarray(z) - zc) ** 2
    out = np.exp(-r2) * r2**n / math.factorial(n)
    return out[()] if np.ndim(out) == 0 else out


def tail_fraction(amps: np.ndarray, levels: int = TAIL_LEVELS) -> float:
    total = float(np.vdot(amps, amps).real)
    if total == 0.0:
        return 0.0
    tail = amps[-levels:]
    return float(np.vdot(tail, tail).real) / total


def displaced_fock_vector(
    n: int, zc: complex, n_max: int, tail_tol: float = 1e-10
) -> FockState:
    """Amplitudes of ``D(zc)|n>`` truncated at ``n_max``.

    Uses ``D(zc)|n> = (a^dag - conj(zc))^n / sqrt(n!) |zc>`` applied to the
    coherent vector expanded ``n`` levels beyond the cutoff, so the kept
    amplitudes are exact.

    Raises
    ------
    LeakageExceededError
        If more than ``tail_tol`` of the norm sits in the top levels.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    zc = complex(zc)
    v = coherent_amplitudes(zc, n_max + n)
    k = np.arange(v.size)
    sq = np.sqrt(k.astype(float))
    for j in range(1, n + 1):
        raised = np.zeros_like(v)
        raised[1:] = sq[1:] * v[:-1]
        v = (raised - zc.conjugate() * v) / math.sqrt(j)
    # mass that would sit at or above the top TAIL_LEVELS of the kept basis
    top = max(n_max + 1 - TAIL_LEVELS, 0)
    leak = float(np.vdot(v[top:], v[top:]).real) / float(np.vdot(v, v).real)
    if leak > tail_tol:
        raise LeakageExceededError(
            f"displaced |{n}> at zc={zc:.4g} leaks {leak:.3g} into the top "
            f"levels of n_max={n_max}; increase n_max",
            leakage=leak,
        )
    return FockState(v[: n_max + 1])


def default_n_max(zc: complex, n: int = 0) -> int:
    """Truncation covering the Poisson tail of ``D(zc)|n>``."""
    s = abs(zc) ** 2
    return int(math.ceil(s + 10.0 * math.sqrt(s) + 20.0)) + 2 * n


@dataclass(frozen=True)
class InitialStateSpec:
    """A coherent state or displaced number state ``D(zc)|n>``."""

    kind: str = "coherent"
    n: int = 0
    zc: complex = 0j

    def __post_init__(self):
        if self.kind not in ("coherent", "displaced_fock"):
            raise ValueError(f"unknown initial state kind {self.kind!r}")
        if self.n < 0:
            raise ValueError("n must be non-negative")
        if self.kind == "coherent" and self.n != 0:
            raise ValueError("coherent states have n = 0")
        object.__setattr__(self, "zc", complex(self.zc))

    @classmethod
    def from_qp(cls, kind: str, n: int, qc: float, pc: float) -> "InitialStateSpec":
        return cls(kind, n, complex(qc, pc) / SQRT2)

    @property
    def qc(self) -> float:
        return self.zc.real * SQRT2

    @property
    def pc(self) -> float:
        return self.zc.imag * SQRT2

    def husimi(self, z):
        return displaced_fock_husimi(self.n, self.zc, z)

    __call__ = husimi

    def log_husimi(self, z):
        r2 = np.abs(np.asarray(z) - self.zc) ** 2
        if self.n == 0:
            return -r2
        with np.errstate(divide="ignore"):
            return self.n * np.log(r2) - r2 - math.lgamma(self.n + 1)

    def default_n_max(self) -> int:
        return default_n_max(self.zc, self.n)

    def fock_state(self, n_max: int | None = None, tail_tol: float = 1e-10) -> FockState:
        if n_max is None:
            n_max = self.default_n_max()
        return displaced_fock_vector(self.n, self.zc, n_max, tail_tol)

    def to_record(self) -> dict:
        return {"kind": self.kind, "n": self.n, "qc": self.qc, "pc": self.pc}


def complex_ho_husimi_oracle(n, zc, omega, gamma, t, pt, norm_factor=True):
    """Closed-form Husimi function of ``D(zc)|n>`` under ``(w - i g)(a^dag a + 1/2)``.

    With ``norm_factor=False`` the z-independent factor
    ``exp(-|zc|^2 (1 - exp(-2 g t)))`` is left out; that variant only agrees
    with the true evolution up to normalization.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    z = np.asarray(_as_z(pt), dtype=complex)
    zc = complex(zc)
    center = zc * np.exp(-1j * complex(omega, -gamma) * t)
    ring = zc * np.exp(-1j * complex(omega, gamma) * t)
    expo = -2.0 * gamma * (n + 0.5) * t - np.abs(z - center) ** 2
    if norm_factor:
        expo = expo - abs(zc) ** 2 * (1.0 - math.exp(-2.0 * gamma * t))
    out = np.exp(expo) * np.abs(z - ring) ** (2 * n) / math.factorial(n)
    return out[()] if out.ndim == 0 else out


def complex_ho_norm_landscape_oracle(omega, gamma, t, pt):
    """``exp(-g t) exp(-|z|^2 (1 - exp(-2 g t)))``."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    z = np.asarray(_as_z(pt), dtype=complex)
    out = np.exp(-gamma * t - np.abs(z) ** 2 * (1.0 - math.exp(-2.0 * gamma * t)))
    return out[()] if out.ndim == 0 else out
