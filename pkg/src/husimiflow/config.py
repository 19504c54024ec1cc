"""Run configuration: strict JSON parsing and the figure presets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .classical_flow import IntegratorSettings
from .errors import ConfigError
from .grid_io import PhaseGrid
from .hamiltonian import (
    Hamiltonian,
    build_hamiltonian,
    complex_harmonic_oscillator,
    damped_anharmonic_oscillator,
    pt_anharmonic_oscillator,
)
from .quantum_flow import PropagationSettings
from .states import InitialStateSpec

__all__ = ["RunConfig", "load_config", "parse_config", "preset_configs", "PRESETS"]

SCHEMA_VERSION = 1


@dataclass
class RunConfig:
    hamiltonian: Hamiltonian
    initial_state: InitialStateSpec
    grid: PhaseGrid = field(default_factory=PhaseGrid)
    times: list[float] = field(default_factory=lambda: [0.0])
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)
    propagation: PropagationSettings | None = None
    out_dir: str = "out"
    csv: bool = False
    renormalize: bool = False
    name: str = "run"
    trajectory_starts: list[tuple[float, float]] = field(default_factory=list)
    trajectory_duration: float = 10.0
    fixed_point_lattice: int = 15

    def propagation_settings(self) -> PropagationSettings:
        if self.propagation is not None:
            return self.propagation
        return PropagationSettings(n_max=self.initial_state.default_n_max())

    def to_dict(self) -> dict:
        g = self.grid
        prop = self.propagation
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "hamiltonian": self.hamiltonian.to_records(),
            "initial_state": self.initial_state.to_record(),
            "grid": {"q_min": g.q_min, "q_max": g.q_max, "p_min": g.p_min,
                     "p_max": g.p_max, "nq": g.n_q, "np": g.n_p},
            "times": list(self.times),
            "integrator": {"dt": self.integrator.dt, "scheme": self.integrator.scheme,
                           "rk45_tol": self.integrator.rk45_tol,
                           "max_log_w": self.integrator.max_log_w},
            "propagation": None if prop is None else {
                "n_max": prop.n_max, "dt": prop.dt, "scheme": prop.scheme,
                "leakage_tol": prop.leakage_tol,
                "renormalize_each_step": prop.renormalize_each_step},
            "outputs": {"dir": self.out_dir, "csv": self.csv, "renormalize": self.renormalize},
            "trajectories": {"starts": [list(s) for s in self.trajectory_starts],
                             "duration": self.trajectory_duration},
            "fixed_points": {"lattice": self.fixed_point_lattice},
        }

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


# -- strict parsing -----------------------------------------------------------


def _obj(data, path, required, optional=()):
    if not isinstance(data, dict):
        raise ConfigError(path, "expected an object")
    unknown = set(data) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown key")
    for key in required:
        if key not in data:
            raise ConfigError(f"{path}.{key}", "missing required key")
    return data


def _num(data, key, path, default=None, integer=False):
    if key not in data or data[key] is None:
        if default is None:
            raise ConfigError(f"{path}.{key}", "missing required value")
        return default
    v = data[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {v!r}")
    if integer:
        if int(v) != v:
            raise ConfigError(f"{path}.{key}", "expected an integer")
        return int(v)
    if not math.isfinite(v):
        raise ConfigError(f"{path}.{key}", "must be finite")
    return float(v)


def _bool(data, key, path, default):
    v = data.get(key, default)
    if not isinstance(v, bool):
        raise ConfigError(f"{path}.{key}", "expected true or false")
    return v


def _wrap(path, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def parse_config(data: dict) -> RunConfig:
    """Validate a decoded JSON config. Unknown keys are errors."""
    _obj(data, "$", ["schema_version", "hamiltonian", "initial_state"],
         ["name", "grid", "times", "integrator", "propagation", "outputs",
          "trajectories", "fixed_points"])
    if data["schema_version"] != SCHEMA_VERSION:
        raise ConfigError("$.schema_version", f"unsupported version {data['schema_version']!r}")

    terms = data["hamiltonian"]
    if not isinstance(terms, list):
        raise ConfigError("$.hamiltonian", "expected a list of terms")
    triples = []
    for k, rec in enumerate(terms):
        p = f"$.hamiltonian[{k}]"
        _obj(rec, p, ["m", "n"], ["re", "im"])
        m, n = _num(rec, "m", p, integer=True), _num(rec, "n", p, integer=True)
        if m < 0 or n < 0:
            raise ConfigError(p, "exponents must be non-negative")
        triples.append((m, n, complex(_num(rec, "re", p, 0.0), _num(rec, "im", p, 0.0))))
    H = build_hamiltonian(triples)

    st = _obj(data["initial_state"], "$.initial_state", ["kind"], ["n", "qc", "pc"])
    kind = st["kind"]
    if kind not in ("coherent", "displaced_fock"):
        raise ConfigError("$.initial_state.kind", f"unknown kind {kind!r}")
    initial = _wrap("$.initial_state", InitialStateSpec.from_qp, kind,
                    _num(st, "n", "$.initial_state", 0, integer=True),
                    _num(st, "qc", "$.initial_state", 0.0),
                    _num(st, "pc", "$.initial_state", 0.0))

    cfg = RunConfig(H, initial, name=str(data.get("name", "run")))

    if "grid" in data:
        g = _obj(data["grid"], "$.grid", ["q_min", "q_max", "p_min", "p_max", "nq", "np"])
        cfg.grid = _wrap("$.grid", PhaseGrid,
                         *(_num(g, k, "$.grid") for k in ("q_min", "q_max", "p_min", "p_max")),
                         _num(g, "nq", "$.grid", integer=True),
                         _num(g, "np", "$.grid", integer=True))

    if "times" in data:
        times = data["times"]
        if not isinstance(times, list) or not times:
            raise ConfigError("$.times", "expected a non-empty list")
        vals = [_num({"t": t}, "t", f"$.times[{k}]") for k, t in enumerate(times)]
        if vals[0] < 0 or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("$.times", "must be non-negative and strictly increasing")
        cfg.times = vals

    if "integrator" in data:
        d = _obj(data["integrator"], "$.integrator", [], ["dt", "scheme", "rk45_tol", "max_log_w"])
        base = IntegratorSettings()
        cfg.integrator = _wrap(
            "$.integrator", IntegratorSettings,
            dt=_num(d, "dt", "$.integrator", base.dt),
            scheme=d.get("scheme", base.scheme),
            rk45_tol=_num(d, "rk45_tol", "$.integrator", base.rk45_tol),
            max_log_w=_num(d, "max_log_w", "$.integrator", base.max_log_w),
        )

    if data.get("propagation") is not None:
        d = _obj(data["propagation"], "$.propagation", [],
                 ["n_max", "dt", "scheme", "leakage_tol", "renormalize_each_step"])
        base = PropagationSettings()
        n_max = d.get("n_max")
        n_max = initial.default_n_max() if n_max is None else _num(d, "n_max", "$.propagation", integer=True)
        cfg.propagation = _wrap(
            "$.propagation", PropagationSettings,
            n_max=n_max,
            dt=_num(d, "dt", "$.propagation", base.dt),
            scheme=d.get("scheme", base.scheme),
            leakage_tol=_num(d, "leakage_tol", "$.propagation", base.leakage_tol),
            renormalize_each_step=_bool(d, "renormalize_each_step", "$.propagation", False),
        )
        if n_max < H.min_truncation:
            raise ConfigError("$.propagation.n_max", "too small for the Hamiltonian's terms")

    if "outputs" in data:
        d = _obj(data["outputs"], "$.outputs", [], ["dir", "csv", "renormalize"])
        cfg.out_dir = str(d.get("dir", cfg.out_dir))
        cfg.csv = _bool(d, "csv", "$.outputs", False)
        cfg.renormalize = _bool(d, "renormalize", "$.outputs", False)

    if "trajectories" in data:
        d = _obj(data["trajectories"], "$.trajectories", [], ["starts", "duration"])
        starts = d.get("starts", [])
        if not isinstance(starts, list):
            raise ConfigError("$.trajectories.starts", "expected a list of [q, p] pairs")
        for k, s in enumerate(starts):
            if not (isinstance(s, list) and len(s) == 2):
                raise ConfigError(f"$.trajectories.starts[{k}]", "expected [q, p]")
            cfg.trajectory_starts.append(
                (_num({"q": s[0]}, "q", f"$.trajectories.starts[{k}]"),
                 _num({"p": s[1]}, "p", f"$.trajectories.starts[{k}]")))
        cfg.trajectory_duration = _num(d, "duration", "$.trajectories", 10.0)

    if "fixed_points" in data:
        d = _obj(data["fixed_points"], "$.fixed_points", [], ["lattice"])
        cfg.fixed_point_lattice = _num(d, "lattice", "$.fixed_points", 15, integer=True)
        if cfg.fixed_point_lattice < 1:
            raise ConfigError("$.fixed_points.lattice", "must be positive")
    return cfg


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("$", f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON: {exc}") from None
    return parse_config(data)


# -- presets ------------------------------------------------------------------

def _portrait_starts(bounds=6.0, n=5):
    step = 2 * bounds / (n - 1)
    return [(-bounds + i * step, -bounds + j * step) for j in range(n) for i in range(n)]


def preset_configs(name: str, grid_points: int = 201) -> list[RunConfig]:
    """Run configs behind the three figures; fig1 yields one per initial state."""
    grid = PhaseGrid.square(7.0, grid_points)
    if name == "fig1":
        H = complex_harmonic_oscillator(1.0, 0.15)
        times = [0.0, 2 * math.pi / 3, 4 * math.pi / 3]
        return [
            RunConfig(H, InitialStateSpec.from_qp("displaced_fock", n, 4.0, 2.0), grid, times,
                      propagation=PropagationSettings(n_max=128, dt=1e-3),
                      renormalize=True, name=f"fig1_n{n}",
                      trajectory_starts=[(4.0, 2.0)], trajectory_duration=times[-1])
            for n in (0, 2)
        ]
    if name == "fig2":
        H = damped_anharmonic_oscillator(0.05, 0.05, 1.0)
        spec = InitialStateSpec.from_qp("displaced_fock", 2, -3.0, 5.0)
        return [RunConfig(H, spec, grid, [0.5, 2.0, 8.0],
                          propagation=PropagationSettings(n_max=spec.default_n_max(), dt=1e-4),
                          renormalize=True, name="fig2",
                          trajectory_starts=_portrait_starts(), trajectory_duration=20.0)]
    if name == "fig3":
        H = pt_anharmonic_oscillator(0.25, 1.0)
        spec = InitialStateSpec.from_qp("displaced_fock", 3, 5.0, 3.0)
        return [RunConfig(H, spec, grid, [math.pi / 10, math.pi / 4, math.pi],
                          propagation=PropagationSettings(n_max=spec.default_n_max(), dt=1e-4),
                          renormalize=True, name="fig3",
                          trajectory_starts=_portrait_starts(), trajectory_duration=8.0)]
    raise ConfigError("preset", f"unknown preset {name!r}")


PRESETS = ("fig1", "fig2", "fig3")
