"""Command-line front end.

Subcommands: classical, quantum, norm-landscape, trajectories, fixed-points,
compare and preset {fig1, fig2, fig3}. Exit codes: 0 success, 2 config error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .classical_flow import (
    backtrace_grid,
    classical_husimi,
    default_seeds,
    find_fixed_points,
    integrate_characteristics,
    norm_landscape,
)
from .config import PRESETS, RunConfig, load_config, preset_configs
from .errors import (
    AllInvalidError,
    ConfigError,
    LeakageExceededError,
    NonFiniteError,
    NoReturnError,
)
from .grid_io import ScalarField, renormalize_max, write_csv, write_field
from .hamiltonian import PhasePoint
from .quantum_flow import expectation_a, propagate_times, quantum_husimi

log = logging.getLogger("husimiflow")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERICAL_ERRORS = (LeakageExceededError, NonFiniteError, AllInvalidError, NoReturnError)


def _out_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError("$.outputs.dir", f"cannot create {path}: {exc}") from None
    if not os.access(path, os.W_OK):
        raise ConfigError("$.outputs.dir", f"{path} is not writable")
    return path


def _export(f: ScalarField, cfg: RunConfig, out: Path) -> list[Path]:
    if cfg.renormalize and f.kind.startswith("husimi"):
        f = renormalize_max(f)
    stem = f"{f.kind}_t{f.time:.6f}"
    paths = [write_field(f, out / f"{stem}.hgrd")]
    if cfg.csv:
        paths.append(write_csv(f, out / f"{stem}.csv"))
    return paths


def _classical_fields(cfg: RunConfig, threads, with_husimi=True):
    """Per time: ``[husimi, norm, log_norm]`` sharing one backtrace."""
    out = []
    for t in cfg.times:
        ch = backtrace_grid(cfg.hamiltonian, cfg.grid, t, cfg.integrator, threads)
        fields = list(norm_landscape(cfg.hamiltonian, cfg.grid, t, characteristics=ch))
        if with_husimi:
            fields.insert(0, classical_husimi(cfg.hamiltonian, cfg.initial_state, cfg.grid,
                                              t, characteristics=ch))
        out.append((t, fields))
    return out


def _quantum_sweep(cfg: RunConfig, n_expectation: int = 0):
    """States at the field times and at ``n_expectation`` sample times, in one sweep."""
    settings = cfg.propagation_settings()
    psi0 = cfg.initial_state.fock_state(settings.n_max)
    t_end = max(cfg.times)
    samples = list(np.linspace(0.0, t_end, n_expectation)) if n_expectation and t_end > 0 else []
    wanted = sorted({t for t in list(cfg.times) + samples if t > 0})
    states = dict(zip(wanted, propagate_times(cfg.hamiltonian, psi0, wanted, settings)))
    states[0.0] = psi0
    return ([(t, states[t]) for t in cfg.times], [(t, states[t]) for t in samples])


def _quantum_fields(cfg: RunConfig, threads, n_expectation: int = 0):
    at_times, samples = _quantum_sweep(cfg, n_expectation)
    return [(t, quantum_husimi(psi, cfg.grid, t, threads)) for t, psi in at_times], samples


def _write_expectation(samples, out: Path) -> Path:
    path = out / "expectation_a.csv"
    with open(path, "w") as fh:
        fh.write("t,re,im,norm2\n")
        for t, s in samples:
            a = expectation_a(s)
            fh.write(f"{t:.17g},{a.real:.17g},{a.imag:.17g},{s.norm2:.17g}\n")
    return path


def run_classical(cfg: RunConfig, threads=None, results=None) -> list[Path]:
    """Classical Husimi and norm-landscape files, one set per time."""
    out = _out_dir(cfg)
    results = _classical_fields(cfg, threads) if results is None else results
    return [p for _, fields in results for f in fields for p in _export(f, cfg, out)]


def run_norm_landscape(cfg: RunConfig, threads=None) -> list[Path]:
    out = _out_dir(cfg)
    results = _classical_fields(cfg, threads, with_husimi=False)
    return [p for _, fields in results for f in fields for p in _export(f, cfg, out)]


def run_quantum(cfg: RunConfig, threads=None, n_expectation: int = 201,
                results=None) -> list[Path]:
    """Quantum Husimi files per time plus the ``<a>(t)`` trajectory CSV."""
    out = _out_dir(cfg)
    fields, samples = _quantum_fields(cfg, threads, n_expectation) if results is None else results
    paths = [p for _, f in fields for p in _export(f, cfg, out)]
    if samples:
        paths.append(_write_expectation(samples, out))
    return paths


def compare(cfg: RunConfig, threads=None, classical=None, quantum=None) -> dict:
    """Sup and L1 distances between max-renormalized classical and quantum fields.

    ``classical`` and ``quantum`` take precomputed ``(t, field)`` lists;
    divergence between the two is information, so this never fails on it.
    """
    out = _out_dir(cfg)
    if classical is None:
        classical = [(t, fs[0]) for t, fs in _classical_fields(cfg, threads)]
    if quantum is None:
        quantum = _quantum_fields(cfg, threads)[0]
    report = {"name": cfg.name, "hamiltonian": cfg.hamiltonian.digest(),
              "times": [], "sup": [], "l1": [], "invalid_cells": []}
    for (t, c), (_, q) in zip(classical, quantum):
        if not c.valid.any() or c.max() <= 0.0:
            sup = l1 = math.nan
        else:
            cn, qn = renormalize_max(c), renormalize_max(q)
            both = cn.valid & qn.valid
            diff = np.where(both, np.abs(cn.values - qn.values), 0.0).reshape(cfg.grid.shape)
            sup = float(diff.max())
            inner = np.trapezoid(diff, dx=cfg.grid.dq, axis=1)
            l1 = float(np.trapezoid(inner, dx=cfg.grid.dp)) / (2 * math.pi)
        report["times"].append(t)
        report["sup"].append(sup)
        report["l1"].append(l1)
        report["invalid_cells"].append(int((~c.valid).sum()))
    (out / "compare_summary.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


def run_trajectories(cfg: RunConfig, starts=None) -> list[Path]:
    out = _out_dir(cfg)
    starts = cfg.trajectory_starts if starts is None else starts
    results = integrate_characteristics(cfg.hamiltonian, [PhasePoint(q, p) for q, p in starts],
                                        cfg.trajectory_duration, cfg.integrator)
    paths = []
    for k, ((q, p), traj) in enumerate(zip(starts, results)):
        if isinstance(traj, NonFiniteError):
            log.warning("trajectory %d from (%g, %g) diverged at t=%g", k, q, p, traj.time)
            continue
        path = out / f"trajectory_{k:03d}.csv"
        traj.to_csv(path)
        paths.append(path)
    return paths


def run_fixed_points(cfg: RunConfig) -> Path:
    g = cfg.grid
    seeds = default_seeds((g.q_min, g.q_max, g.p_min, g.p_max), cfg.fixed_point_lattice)
    result = find_fixed_points(cfg.hamiltonian, seeds)
    path = _out_dir(cfg) / "fixed_points.csv"
    result.to_csv(path)
    if result.n_nonconvergent:
        log.info("%d seeds did not converge", result.n_nonconvergent)
    return path


def run_preset(name: str, out: str, threads=None, grid_points: int = 201,
               renormalize: bool = True, csv: bool = False) -> list[dict]:
    """Everything behind one figure: fields, trajectories, fixed points, report."""
    reports = []
    configs = preset_configs(name, grid_points)
    for cfg in configs:
        sub = Path(out) / cfg.name if len(configs) > 1 else Path(out)
        cfg.out_dir, cfg.renormalize, cfg.csv = str(sub), renormalize, csv
        _out_dir(cfg)
        cfg.dump(sub / "config.json")
        classical = _classical_fields(cfg, threads)
        run_classical(cfg, threads, results=classical)
        quantum = _quantum_fields(cfg, threads, n_expectation=201)
        run_quantum(cfg, threads, results=quantum)
        run_trajectories(cfg)
        run_fixed_points(cfg)
        reports.append(compare(cfg, threads, classical=[(t, fs[0]) for t, fs in classical],
                               quantum=quantum[0]))
    return reports


def _print_report(report: dict):
    print(f"{report['name']}: hamiltonian {report['hamiltonian']}")
    print(f"{'t':>12} {'sup':>12} {'L1':>12}")
    for t, s, l in zip(report["times"], report["sup"], report["l1"]):
        print(f"{t:12.6f} {s:12.4e} {l:12.4e}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="husimiflow", description="Classical and quantum Husimi dynamics for non-Hermitian Hamiltonians.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
        p.add_argument("--renormalize", action=argparse.BooleanOptionalAction, default=None,
                       help="divide Husimi fields by their maximum before export")
        p.add_argument("--csv", action="store_true", help="also write CSV copies of fields")
        p.add_argument("-v", "--verbose", action="store_true")

    for name in ("classical", "quantum", "norm-landscape", "trajectories", "fixed-points", "compare"):
        common(sub.add_parser(name))
    p = sub.add_parser("preset", help="reproduce the data behind a figure")
    p.add_argument("name", choices=PRESETS)
    p.add_argument("--grid-points", type=int, default=201, help="points per grid axis")
    common(p, needs_config=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "preset":
            reports = run_preset(args.name, args.out or f"out/{args.name}", args.threads,
                                 args.grid_points,
                                 renormalize=True if args.renormalize is None else args.renormalize,
                                 csv=args.csv)
            for r in reports:
                _print_report(r)
            return EXIT_OK
        cfg = load_config(args.config)
        if args.out:
            cfg.out_dir = args.out
        if args.renormalize is not None:
            cfg.renormalize = args.renormalize
        cfg.csv = cfg.csv or args.csv
        if args.command == "classical":
            run_classical(cfg, args.threads)
        elif args.command == "quantum":
            run_quantum(cfg, args.threads)
        elif args.command == "norm-landscape":
            run_norm_landscape(cfg, args.threads)
        elif args.command == "trajectories":
            run_trajectories(cfg)
        elif args.command == "fixed-points":
            run_fixed_points(cfg)
        elif args.command == "compare":
            _print_report(compare(cfg, args.threads))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
