"""Semiclassical Husimi evolution by the method of characteristics.

The classical Husimi function at time ``t`` is ``Q0(zeta0(z, t)) w(z, t)``:
every grid point ``z`` is traced backwards along ``zeta_dot = -i conj(dK/dz)``
to its initial point ``zeta0`` while the exponent
``log w = 2 * integral of Gamma`` is accumulated along the same path. The
exponent is an extra ODE component integrated by the same scheme as the
trajectory, so ``w`` never overflows before the final ``exp``.

Grid evaluation is split into fixed-size chunks processed by a thread pool.
Chunk boundaries do not depend on the worker count, so results are bitwise
identical for any number of threads.
"""

from __future__ import annotations

import cmath
import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import NoReturnError, NonFiniteError
from .grid_io import PhaseGrid, ScalarField
from .hamiltonian import SQRT2, Hamiltonian, PhasePoint

__all__ = [
    "IntegratorSettings",
    "Trajectory",
    "BacktraceResult",
    "CharacteristicMap",
    "FixedPoint",
    "FixedPointSearch",
    "integrate_characteristic",
    "integrate_characteristics",
    "backtrace",
    "backtrace_grid",
    "classical_husimi",
    "norm_landscape",
    "find_fixed_points",
    "orbit_period",
]

log = logging.getLogger(__name__)

CHUNK = 8192
DIVERGED = 1e150


@dataclass(frozen=True)
class IntegratorSettings:
    dt: float = 1e-3
    scheme: str = "rk4"
    rk45_tol: float = 1e-10
    max_log_w: float = 700.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in ("rk4", "rk45"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.rk45_tol > 0:
            raise ValueError("rk45_tol must be positive")
        if not self.max_log_w > 0:
            raise ValueError("max_log_w must be positive")


@dataclass
class Trajectory:
    """Samples of a characteristic with the running exponent ``2 int Gamma ds``."""

    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    log_w: np.ndarray

    def __len__(self):
        return len(self.times)

    @property
    def z(self) -> np.ndarray:
        return (self.q + 1j * self.p) / SQRT2

    @property
    def points(self) -> list[PhasePoint]:
        return [PhasePoint(float(a), float(b)) for a, b in zip(self.q, self.p)]

    @property
    def end(self) -> PhasePoint:
        return PhasePoint(float(self.q[-1]), float(self.p[-1]))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "q", "p", "log_w"])
            for row in zip(self.times, self.q, self.p, self.log_w):
                w.writerow([f"{v:.17g}" for v in row])


@dataclass(frozen=True)
class BacktraceResult:
    zeta0: PhasePoint
    log_w: float
    saturated: bool = False

    @property
    def w(self) -> float:
        return math.exp(self.log_w)


@dataclass
class CharacteristicMap:
    """Backtraced initial points and norm exponents for every grid cell."""

    grid: PhaseGrid
    t: float
    zeta0: np.ndarray
    log_w: np.ndarray
    valid: np.ndarray
    saturated: np.ndarray

    def meta(self, H: Hamiltonian) -> dict:
        return {
            "hamiltonian": H.digest(),
            "invalid": int((~self.valid).sum()),
            "saturated": int(self.saturated.sum()),
        }


def _n_steps(t: float, dt: float) -> int:
    return int(math.ceil(abs(t) / dt - 1e-9)) if t != 0 else 0


# -- integrators -------------------------------------------------------------


def _rk4_arrays(H, zeta, h, n_steps):
    """Advance ``(zeta, lam)`` by ``n_steps`` RK4 steps of signed size ``h``."""
    lam = np.zeros(zeta.shape)
    rhs = H.characteristic_rhs
    half, sixth = 0.5 * h, h / 6.0
    for _ in range(n_steps):
        v1, g1 = rhs(zeta)
        v2, g2 = rhs(zeta + half * v1)
        v3, g3 = rhs(zeta + half * v2)
        v4, g4 = rhs(zeta + h * v3)
        zeta = zeta + sixth * (v1 + 2.0 * (v2 + v3) + v4)
        lam = lam + sixth * (g1 + 2.0 * (g2 + g3) + g4)
    return zeta, lam


def _rk45_arrays(H, zeta, t_final, tol):
    n = zeta.size

    def fun(_, y):
        z = y[:n] + 1j * y[n:2 * n]
        v, g = H.characteristic_rhs(z)
        return np.concatenate([v.real, v.imag, g])

    y0 = np.concatenate([zeta.real, zeta.imag, np.zeros(n)])
    sol = solve_ivp(fun, (0.0, t_final), y0, method="RK45", rtol=tol, atol=tol)
    if not sol.success:
        raise NonFiniteError(sol.message, time=float(sol.t[-1]))
    y = sol.y[:, -1]
    return y[:n] + 1j * y[n:2 * n], y[2 * n:]


def _backtrace_chunk(H, z, t, settings):
    with np.errstate(all="ignore"):
        if settings.scheme == "rk4":
            n = _n_steps(t, settings.dt)
            zeta, lam = _rk4_arrays(H, z.astype(complex), -t / n if n else 0.0, n)
        else:
            try:
                zeta, lam = _rk45_arrays(H, z.astype(complex), -t, settings.rk45_tol)
            except (NonFiniteError, FloatingPointError):
                # fall back to per-cell solves so one divergent cell only
                # invalidates itself
                zeta = np.empty_like(z, dtype=complex)
                lam = np.empty(z.shape)
                for k, zk in enumerate(z):
                    try:
                        a, b = _rk45_arrays(H, np.array([zk]), -t, settings.rk45_tol)
                        zeta[k], lam[k] = a[0], b[0]
                    except (NonFiniteError, FloatingPointError):
                        zeta[k], lam[k] = np.nan, np.nan
        log_w = -lam
        valid = np.isfinite(zeta) & np.isfinite(log_w) & (np.abs(zeta) < DIVERGED)
    return zeta, log_w, valid


def _chunked(n: int):
    return [slice(a, min(a + CHUNK, n)) for a in range(0, n, CHUNK)]


def _resolve_threads(threads):
    return max(1, os.cpu_count() or 1) if threads is None else max(1, int(threads))


def _backtrace_points(H, z, t, settings, threads=None):
    z = np.ascontiguousarray(z, dtype=complex).ravel()
    zeta0 = np.empty_like(z)
    log_w = np.empty(z.shape)
    valid = np.empty(z.shape, dtype=bool)

    def work(sl):
        a, b, c = _backtrace_chunk(H, z[sl], t, settings)
        zeta0[sl], log_w[sl], valid[sl] = a, b, c

    chunks = _chunked(z.size)
    n_workers = min(_resolve_threads(threads), len(chunks))
    if n_workers <= 1:
        for sl in chunks:
            work(sl)
    else:
        with ThreadPoolExecutor(n_workers) as pool:
            list(pool.map(work, chunks))

    zeta0[~valid] = np.nan
    log_w[~valid] = np.nan
    saturated = valid & (np.abs(log_w) > settings.max_log_w)
    log_w[saturated] = np.clip(log_w[saturated], -settings.max_log_w, settings.max_log_w)
    return zeta0, log_w, valid, saturated


# -- public operations -------------------------------------------------------


def integrate_characteristic(
    H: Hamiltonian, start: PhasePoint, t_final: float, settings: IntegratorSettings | None = None
) -> Trajectory:
    """Integrate the characteristic from ``start`` for (signed) time ``t_final``.

    ``log_w[k]`` is ``2 * int_0^{times[k]} Gamma(zeta(s)) ds``; negative
    ``t_final`` integrates backwards.

    Raises
    ------
    NonFiniteError
        If the path leaves the finite range; ``exc.time`` is the failure time.
    """
    settings = settings or IntegratorSettings()
    z0 = complex(start.z)
    if settings.scheme == "rk45":
        return _integrate_rk45(H, z0, t_final, settings)
    n = _n_steps(t_final, settings.dt)
    h = t_final / n if n else 0.0
    zs = np.empty(n + 1, dtype=complex)
    lams = np.empty(n + 1)
    zeta, lam = z0, 0.0
    zs[0], lams[0] = zeta, lam
    rhs = H.characteristic_rhs
    half, sixth = 0.5 * h, h / 6.0
    for k in range(1, n + 1):
        try:
            v1, g1 = rhs(zeta)
            v2, g2 = rhs(zeta + half * v1)
            v3, g3 = rhs(zeta + half * v2)
            v4, g4 = rhs(zeta + h * v3)
        except OverflowError:
            raise NonFiniteError("characteristic diverged", time=k * h) from None
        zeta = zeta + sixth * (v1 + 2.0 * (v2 + v3) + v4)
        lam = lam + sixth * (g1 + 2.0 * (g2 + g3) + g4)
        if not (cmath.isfinite(zeta) and math.isfinite(lam)) or abs(zeta) > DIVERGED:
            raise NonFiniteError("characteristic diverged", time=k * h)
        zs[k], lams[k] = zeta, lam
    times = np.arange(n + 1) * h
    if n:
        times[-1] = t_final
    return Trajectory(times, zs.real * SQRT2, zs.imag * SQRT2, lams)


def integrate_characteristics(
    H: Hamiltonian,
    starts: Sequence[PhasePoint],
    t_final: float,
    settings: IntegratorSettings | None = None,
) -> list[Trajectory | NonFiniteError]:
    """Integrate many characteristics at once with fixed-step RK4.

    Returns one entry per start: a Trajectory, or the NonFiniteError that
    ``integrate_characteristic`` would have raised for that start.
    """
    settings = settings or IntegratorSettings()
    if settings.scheme != "rk4":
        out = []
        for s in starts:
            try:
                out.append(integrate_characteristic(H, s, t_final, settings))
            except NonFiniteError as exc:
                out.append(exc)
        return out
    n = _n_steps(t_final, settings.dt)
    h = t_final / n if n else 0.0
    zeta = np.array([complex(s.z) for s in starts], dtype=complex)
    zs = np.empty((n + 1, zeta.size), dtype=complex)
    lams = np.empty((n + 1, zeta.size))
    lam = np.zeros(zeta.size)
    zs[0], lams[0] = zeta, lam
    rhs = H.characteristic_rhs
    half, sixth = 0.5 * h, h / 6.0
    with np.errstate(all="ignore"):
        for k in range(1, n + 1):
            v1, g1 = rhs(zeta)
            v2, g2 = rhs(zeta + half * v1)
            v3, g3 = rhs(zeta + half * v2)
            v4, g4 = rhs(zeta + h * v3)
            zeta = zeta + sixth * (v1 + 2.0 * (v2 + v3) + v4)
            lam = lam + sixth * (g1 + 2.0 * (g2 + g3) + g4)
            zs[k], lams[k] = zeta, lam
        bad = ~(np.isfinite(zs) & np.isfinite(lams) & (np.abs(zs) <= DIVERGED))
    times = np.arange(n + 1) * h
    if n:
        times[-1] = t_final
    out = []
    for j in range(zeta.size):
        hit = np.flatnonzero(bad[:, j])
        if hit.size:
            out.append(NonFiniteError("characteristic diverged", time=hit[0] * h))
        else:
            out.append(Trajectory(times.copy(), zs[:, j].real * SQRT2,
                                  zs[:, j].imag * SQRT2, lams[:, j].copy()))
    return out


def _integrate_rk45(H, z0, t_final, settings):
    n = _n_steps(t_final, settings.dt)
    t_eval = np.linspace(0.0, t_final, n + 1)

    def fun(_, y):
        v, g = H.characteristic_rhs(complex(y[0], y[1]))
        return [v.real, v.imag, g]

    if n == 0:
        return Trajectory(np.zeros(1), np.array([z0.real * SQRT2]),
                          np.array([z0.imag * SQRT2]), np.zeros(1))
    with np.errstate(all="ignore"):
        sol = solve_ivp(fun, (0.0, t_final), [z0.real, z0.imag, 0.0], method="RK45",
                        t_eval=t_eval, rtol=settings.rk45_tol, atol=settings.rk45_tol)
    if not sol.success or not np.all(np.isfinite(sol.y)):
        raise NonFiniteError(f"characteristic diverged: {sol.message}", time=float(sol.t[-1]))
    return Trajectory(sol.t, sol.y[0] * SQRT2, sol.y[1] * SQRT2, sol.y[2])


def backtrace(
    H: Hamiltonian, pt: PhasePoint, t: float, settings: IntegratorSettings | None = None
) -> BacktraceResult:
    """Trace ``pt`` back for duration ``t``; returns ``zeta0`` and ``log w``."""
    if t < 0:
        raise ValueError("backtrace time must be non-negative")
    settings = settings or IntegratorSettings()
    zeta0, log_w, valid, sat = _backtrace_points(H, np.array([pt.z]), t, settings, threads=1)
    if not valid[0]:
        raise NonFiniteError(f"backtrace from ({pt.q}, {pt.p}) diverged", time=t)
    return BacktraceResult(PhasePoint.from_z(zeta0[0]), float(log_w[0]), bool(sat[0]))


def backtrace_grid(
    H: Hamiltonian,
    grid: PhaseGrid,
    t: float,
    settings: IntegratorSettings | None = None,
    threads: int | None = None,
) -> CharacteristicMap:
    """Backtrace every grid cell; divergent cells are flagged invalid."""
    if t < 0:
        raise ValueError("backtrace time must be non-negative")
    settings = settings or IntegratorSettings()
    zeta0, log_w, valid, sat = _backtrace_points(H, grid.z(), t, settings, threads)
    n_bad = int((~valid).sum())
    if n_bad:
        log.warning("%d of %d cells diverged while tracing back to t=%g", n_bad, valid.size, t)
    return CharacteristicMap(grid, float(t), zeta0, log_w, valid, sat)


def _initial_values(initial, zeta0, log_w):
    """``Q0(zeta0) * exp(log_w)``, in the log domain where possible."""
    log_q0 = getattr(initial, "log_husimi", None)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        if log_q0 is not None:
            lq = log_q0(zeta0)
            out = np.exp(lq + log_w)
            plain = log_w == 0
            if np.any(plain):
                out[plain] = initial(zeta0[plain])
            return out
        q0 = np.asarray(initial(zeta0), dtype=float)
        shifted = np.exp(np.log(np.where(q0 > 0, q0, 1.0)) + log_w)
        out = np.where(q0 > 0, shifted, 0.0)
        return np.where(log_w == 0, q0, out)


def classical_husimi(
    H: Hamiltonian,
    initial: Callable,
    grid: PhaseGrid,
    t: float,
    settings: IntegratorSettings | None = None,
    threads: int | None = None,
    characteristics: CharacteristicMap | None = None,
) -> ScalarField:
    """Classical Husimi field ``Q0(zeta0(z, t)) w(z, t)`` on ``grid``.

    ``initial`` maps complex points to initial Husimi values; if it also has a
    ``log_husimi`` method that is used to keep the product in the log domain.
    A precomputed ``characteristics`` map for the same grid and time can be
    passed to share the backtrace between several initial states.
    """
    ch = characteristics or backtrace_grid(H, grid, t, settings, threads)
    if ch.grid != grid or ch.t != t:
        raise ValueError("characteristic map does not match grid/time")
    values = np.full(grid.size, np.nan)
    v = ch.valid
    values[v] = _initial_values(initial, ch.zeta0[v], ch.log_w[v])
    valid = v & np.isfinite(values)
    return ScalarField(grid, values, valid, kind="husimi_classical", time=t, meta=ch.meta(H))


def norm_landscape(
    H: Hamiltonian,
    grid: PhaseGrid,
    t: float,
    settings: IntegratorSettings | None = None,
    threads: int | None = None,
    characteristics: CharacteristicMap | None = None,
) -> tuple[ScalarField, ScalarField]:
    """Norm landscape ``w(z, t)`` and its logarithm on ``grid``."""
    ch = characteristics or backtrace_grid(H, grid, t, settings, threads)
    if ch.grid != grid or ch.t != t:
        raise ValueError("characteristic map does not match grid/time")
    meta = ch.meta(H)
    with np.errstate(over="ignore"):
        w = np.exp(ch.log_w)
    valid_w = ch.valid & np.isfinite(w)
    return (
        ScalarField(grid, w, valid_w, kind="norm_landscape", time=t, meta=meta),
        ScalarField(grid, ch.log_w, ch.valid, kind="log_norm_landscape", time=t, meta=meta),
    )


# -- fixed points -------------------------------------------------------------


@dataclass(frozen=True)
class FixedPoint:
    point: PhasePoint
    eigenvalues: np.ndarray
    residual: float

    @property
    def kind(self) -> str:
        ev = self.eigenvalues
        re, im = ev.real, ev.imag
        scale = max(float(np.abs(ev).max()), 1e-300)
        if np.any(np.abs(im) > 1e-12 * scale):
            if np.all(np.abs(re) <= 1e-9 * scale):
                return "elliptic"
            return "unstable spiral" if re[0] > 0 else "stable spiral"
        if re.min() < 0 < re.max():
            return "saddle"
        return "unstable node" if re.min() > 0 else "stable node"


@dataclass
class FixedPointSearch:
    """Converged, deduplicated fixed points plus the count of failed seeds."""

    points: list[FixedPoint] = field(default_factory=list)
    n_nonconvergent: int = 0

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, k):
        return self.points[k]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["q", "p", "eig1_re", "eig1_im", "eig2_re", "eig2_im", "kind", "residual"])
            for fp in self.points:
                e = fp.eigenvalues
                w.writerow([f"{fp.point.q:.17g}", f"{fp.point.p:.17g}",
                            f"{e[0].real:.17g}", f"{e[0].imag:.17g}",
                            f"{e[1].real:.17g}", f"{e[1].imag:.17g}",
                            fp.kind, f"{fp.residual:.3g}"])


def default_seeds(bounds=(-7.0, 7.0, -7.0, 7.0), n: int = 15) -> list[PhasePoint]:
    qs = np.linspace(bounds[0], bounds[1], n)
    ps = np.linspace(bounds[2], bounds[3], n)
    return [PhasePoint(float(q), float(p)) for p in ps for q in qs]


def _newton(H, x, tol, max_iter):
    for _ in range(max_iter):
        v = complex(H.velocity(complex(x[0], x[1]) / SQRT2))
        f = np.array([v.real, v.imag])
        res = float(np.hypot(*f))
        if not math.isfinite(res):
            return None, res
        if res <= tol:
            return x, res
        J = H.jacobian(complex(x[0], x[1]) / SQRT2)
        try:
            step = np.linalg.solve(J, f)
        except np.linalg.LinAlgError:
            return None, res
        x = x - step
        if not np.all(np.isfinite(x)) or np.hypot(*x) > 1e8:
            return None, math.inf
    return None, res


def find_fixed_points(
    H: Hamiltonian,
    seeds: Iterable[PhasePoint] | None = None,
    tol: float = 1e-12,
    merge_tol: float = 1e-8,
    max_iter: int = 60,
) -> FixedPointSearch:
    """Newton search for zeros of the characteristic velocity.

    Seeds default to a 15x15 lattice on ``[-7, 7]^2``. Roots closer than
    ``merge_tol`` are merged, keeping the smallest residual. Each fixed point
    carries the eigenvalues of the linearized flow.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    seeds = default_seeds() if seeds is None else list(seeds)
    found: list[tuple[np.ndarray, float]] = []
    failed = 0
    for s in seeds:
        x, res = _newton(H, np.array([s.q, s.p], dtype=float), tol, max_iter)
        if x is None:
            failed += 1
            continue
        for k, (y, r) in enumerate(found):
            if np.hypot(*(x - y)) <= merge_tol * max(1.0, np.hypot(*y)):
                if res < r:
                    found[k] = (x, res)
                break
        else:
            found.append((x, res))
    if failed:
        log.info("%d of %d fixed-point seeds did not converge", failed, len(seeds))
    found.sort(key=lambda item: (item[0][0], item[0][1]))
    points = []
    for x, res in found:
        ev = np.linalg.eigvals(H.jacobian(complex(x[0], x[1]) / SQRT2))
        ev = ev[np.lexsort((ev.imag, ev.real))[::-1]]
        points.append(FixedPoint(PhasePoint(float(x[0]), float(x[1])), ev, res))
    return FixedPointSearch(points, failed)


# -- recurrence ----------------------------------------------------------------


def _hermite(x0, v0, x1, v1, h, s):
    """Cubic Hermite interpolant on a step of length ``h`` at fraction ``s``."""
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return h00 * x0 + h10 * h * v0 + h01 * x1 + h11 * h * v1


def orbit_period(
    H: Hamiltonian,
    start: PhasePoint,
    settings: IntegratorSettings | None = None,
    horizon: float = 200.0,
) -> float:
    """First-return time to the section through ``start`` normal to the flow.

    Crossings are located by cubic Hermite interpolation between RK4 steps.

    Raises
    ------
    NoReturnError
        If no return happens before ``horizon`` or ``start`` is a fixed point.
    """
    settings = settings or IntegratorSettings()
    h = settings.dt
    z0 = complex(start.z)
    normal = complex(H.velocity(z0))
    speed = abs(normal)
    if speed == 0.0:
        raise NoReturnError("start is a fixed point")
    normal /= speed

    def side(zeta):
        return ((zeta - z0) * SQRT2 * normal.conjugate()).real

    rhs = H.zeta_velocity
    zeta, t, far = z0, 0.0, 0.0
    f_prev = 0.0
    v_prev = rhs(zeta)
    for _ in range(int(math.ceil(horizon / h))):
        k1 = v_prev
        k2 = rhs(zeta + 0.5 * h * k1)
        k3 = rhs(zeta + 0.5 * h * k2)
        k4 = rhs(zeta + h * k3)
        new = zeta + h / 6.0 * (k1 + 2 * (k2 + k3) + k4)
        if not cmath.isfinite(new):
            raise NoReturnError(f"flow diverged at t={t + h:g}")
        v_new = rhs(new)
        f_new = side(new)
        dist = abs(new - z0) * SQRT2
        far = max(far, dist)
        if f_prev < 0.0 <= f_new and dist < 0.5 * far:
            a, b, va, vb = zeta, new, v_prev, v_new
            s = brentq(lambda u: side(_hermite(a, va, b, vb, h, u)), 0.0, 1.0, xtol=1e-15)
            return t + s * h
        zeta, v_prev, f_prev, t = new, v_new, f_new, t + h
    raise NoReturnError(f"no return to the section within t={horizon:g}")
