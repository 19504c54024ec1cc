"""
Damped anharmonic oscillator: where the classical picture breaks down
======================================================================

With a quartic term the classical transport is only a short-time
approximation. The characteristic flow has outward spirals, and the norm
landscape piles weight away from the origin.
"""

import numpy as np

from husimiflow import (
    InitialStateSpec,
    PhaseGrid,
    PropagationSettings,
    classical_husimi,
    damped_anharmonic_oscillator,
    find_fixed_points,
    norm_landscape,
    propagate_times,
    quantum_husimi,
    renormalize_max,
)

H = damped_anharmonic_oscillator(gamma=0.05, beta=0.05, delta=1.0)

# Fixed points of the characteristic flow and their linear type.
for fp in find_fixed_points(H):
    print(f"fixed point ({fp.point.q:+.4f}, {fp.point.p:+.4f}): {fp.kind}, "
          f"eigenvalues {np.round(fp.eigenvalues, 4)}")

grid = PhaseGrid.square(7.0, 61)
w = norm_landscape(H, grid, 8.0)[0]
k = int(np.nanargmax(w.values))
q, p = grid.coords()
print(f"t = 8 norm landscape peaks at ({q[k]:.2f}, {p[k]:.2f}), w = {w.values[k]:.3g}")

# Classical against quantum, both scaled to a maximum of one.
spec = InitialStateSpec.from_qp("displaced_fock", 2, -3.0, 5.0)
n_max = spec.default_n_max()
times = [0.1, 0.5, 2.0]
states = propagate_times(H, spec.fock_state(n_max), times, PropagationSettings(n_max=n_max, dt=1e-4))
for t, psi in zip(times, states):
    c = renormalize_max(classical_husimi(H, spec, grid, t))
    qf = renormalize_max(quantum_husimi(psi, grid, t))
    print(f"t = {t:4.1f}: sup |classical - quantum| = {np.nanmax(np.abs(c.values - qf.values)):.3f}")
