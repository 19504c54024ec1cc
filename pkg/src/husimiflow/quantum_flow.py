"""Non-unitary evolution ``i psi_dot = K psi`` in a truncated Fock basis.

The state is stepped with classic RK4 on the banded matrix of ``K``; the
norm is never renormalized during propagation because its decay or growth
is the physics. Truncation is monitored through the population in the top
five levels.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import LeakageExceededError, ZeroNormError
from .grid_io import PhaseGrid, ScalarField
from .hamiltonian import Hamiltonian, PhasePoint
from .states import TAIL_LEVELS, FockState, coherent_overlap, coherent_state

__all__ = [
    "PropagationSettings",
    "propagate",
    "propagate_times",
    "quantum_husimi",
    "expectation_a",
    "expectation_trajectory",
    "adjoint_coherent_norm",
    "norm_rate",
    "pt_reflect",
]

log = logging.getLogger(__name__)

CHUNK = 8192
# RK4 is stable on the imaginary axis up to |h lambda| = 2 sqrt(2)
RK4_STABLE = 2.5


@dataclass(frozen=True)
class PropagationSettings:
    n_max: int = 128
    dt: float = 1e-3
    scheme: str = "rk4"
    leakage_tol: float = 1e-8
    renormalize_each_step: bool = False
    check_every: int = 100

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme != "rk4":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0.0 < self.leakage_tol < 1.0:
            raise ValueError("leakage_tol must lie in (0, 1)")


def _operator(H: Hamiltonian, n_max: int) -> sp.csr_matrix:
    return sp.csr_matrix(H.fock_matrix(n_max))


def _leakage(psi: np.ndarray) -> float:
    total = float(np.vdot(psi, psi).real)
    if total == 0.0:
        return 0.0
    top = psi[-TAIL_LEVELS:]
    return float(np.vdot(top, top).real) / total


def _check_leakage(psi, settings, t):
    leak = _leakage(psi)
    if leak > settings.leakage_tol:
        raise LeakageExceededError(
            f"top {TAIL_LEVELS} levels hold {leak:.3g} of the norm at t={t:.4g} "
            f"(n_max={settings.n_max}); increase n_max",
            leakage=leak,
            time=t,
        )


def _step_count(K, t, dt):
    n = int(math.ceil(abs(t) / dt - 1e-9)) if t else 0
    # Gershgorin bound on the spectral radius keeps RK4 inside its stability region
    radius = float(np.abs(K).sum(axis=1).max()) if K.nnz else 0.0
    n_stable = int(math.ceil(abs(t) * radius / RK4_STABLE))
    if n_stable > n:
        log.info("refining %d -> %d RK4 steps for stability (|K| <= %.3g)", n, n_stable, radius)
        n = n_stable
    return n


def _rk4(K, psi, h, n_steps, settings, t0=0.0):
    mik = (-1j * K).tocsr()
    half, sixth = 0.5 * h, h / 6.0
    for k in range(1, n_steps + 1):
        k1 = mik @ psi
        k2 = mik @ (psi + half * k1)
        k3 = mik @ (psi + half * k2)
        k4 = mik @ (psi + h * k3)
        psi = psi + sixth * (k1 + 2.0 * (k2 + k3) + k4)
        if settings.renormalize_each_step:
            psi = psi / math.sqrt(float(np.vdot(psi, psi).real))
        if k % settings.check_every == 0 or k == n_steps:
            _check_leakage(psi, settings, t0 + k * h)
    return psi


def _validate(psi0: FockState, settings: PropagationSettings):
    if psi0.n_max != settings.n_max:
        raise ValueError(
            f"state truncation {psi0.n_max} differs from settings.n_max={settings.n_max}"
        )


def propagate(
    H: Hamiltonian, psi0: FockState, t: float, settings: PropagationSettings | None = None
) -> FockState:
    """Evolve ``psi0`` for time ``t`` under ``i psi_dot = K psi``.

    Raises
    ------
    LeakageExceededError
        When the top Fock levels carry more than ``leakage_tol`` of the norm.
    """
    settings = settings or PropagationSettings(n_max=psi0.n_max)
    _validate(psi0, settings)
    K = _operator(H, settings.n_max)
    n = _step_count(K, t, settings.dt)
    psi = np.array(psi0.amps)
    _check_leakage(psi, settings, 0.0)
    if n:
        psi = _rk4(K, psi, t / n, n, settings)
    return FockState(psi)


def propagate_times(
    H: Hamiltonian,
    psi0: FockState,
    times: Sequence[float],
    settings: PropagationSettings | None = None,
) -> list[FockState]:
    """States at each of the increasing ``times`` from one sweep."""
    settings = settings or PropagationSettings(n_max=psi0.n_max)
    _validate(psi0, settings)
    if any(b <= a for a, b in zip(times, times[1:])) or (times and times[0] < 0):
        raise ValueError("times must be non-negative and strictly increasing")
    K = _operator(H, settings.n_max)
    psi = np.array(psi0.amps)
    _check_leakage(psi, settings, 0.0)
    out, now = [], 0.0
    for t in times:
        n = _step_count(K, t - now, settings.dt)
        if n:
            psi = _rk4(K, psi, (t - now) / n, n, settings, t0=now)
        now = t
        out.append(FockState(psi))
    return out


def quantum_husimi(
    psi: FockState, grid: PhaseGrid, time: float = 0.0, threads: int | None = None
) -> ScalarField:
    """``|<z|psi>|^2`` on every grid cell."""
    z = grid.z()
    values = np.empty(grid.size)

    def work(sl):
        ov = coherent_overlap(psi, z[sl])
        values[sl] = ov.real**2 + ov.imag**2

    chunks = [slice(a, min(a + CHUNK, z.size)) for a in range(0, z.size, CHUNK)]
    n_workers = min(len(chunks), threads or 1)
    if n_workers <= 1:
        for sl in chunks:
            work(sl)
    else:
        with ThreadPoolExecutor(n_workers) as pool:
            list(pool.map(work, chunks))
    return ScalarField(grid, values, kind="husimi_quantum", time=time,
                       meta={"n_max": psi.n_max, "norm2": repr(psi.norm2)})


def expectation_a(psi: FockState) -> complex:
    """Normalized ``<psi|a|psi> / <psi|psi>``."""
    norm2 = psi.norm2
    if norm2 == 0.0:
        raise ZeroNormError("expectation value of a zero state")
    a = psi.amps
    ladder = np.sqrt(np.arange(1, a.size))
    return complex(np.sum(ladder * a[:-1].conjugate() * a[1:]) / norm2)


def expectation_trajectory(
    H: Hamiltonian,
    psi0: FockState,
    times: Sequence[float],
    settings: PropagationSettings | None = None,
) -> np.ndarray:
    """``<a>(t)`` along a propagation, one value per requested time."""
    times = list(times)
    states = propagate_times(H, psi0, [t for t in times if t > 0], settings)
    values = [expectation_a(psi0)] if times and times[0] == 0 else []
    values += [expectation_a(s) for s in states]
    return np.array(values)


def adjoint_coherent_norm(
    H: Hamiltonian, pt: PhasePoint, t: float, settings: PropagationSettings | None = None
) -> float:
    """``|| U^dag |z> ||^2``: the coherent state at ``pt`` evolved by ``-K^dag``."""
    settings = settings or PropagationSettings()
    phi0 = coherent_state(pt, settings.n_max)
    return propagate(-H.adjoint(), phi0, t, settings).norm2


def norm_rate(H: Hamiltonian, psi: FockState) -> float:
    """``2 <psi|Gamma|psi>`` with ``Gamma = (K - K^dag) / 2i``; equals ``d|psi|^2/dt``."""
    K = H.fock_matrix(psi.n_max)
    gamma_op = (K - K.conj().T) / 2j
    return float(2.0 * np.vdot(psi.amps, gamma_op @ psi.amps).real)


def pt_reflect(psi: FockState) -> FockState:
    """PT image of a state: ``q -> -q`` (parity) with complex conjugation."""
    sign = np.where(np.arange(psi.amps.size) % 2 == 0, 1.0, -1.0)
    return FockState(sign * psi.amps.conjugate())
