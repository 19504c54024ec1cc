"""
Damped harmonic oscillator: classical and quantum Husimi flows
===============================================================

For K = (omega - i gamma)(a^dag a + 1/2) the Hamiltonian is bilinear, so the
classical transport of the Husimi function along characteristics is exact.
This script checks that against the closed form and the Fock-space
propagation, and shows how the norm drains out of the state.
"""

import math

import numpy as np

from husimiflow import (
    InitialStateSpec,
    PhaseGrid,
    PropagationSettings,
    classical_husimi,
    complex_harmonic_oscillator,
    complex_ho_husimi_oracle,
    integrate_field,
    propagate,
    quantum_husimi,
)

omega, gamma = 1.0, 0.15
H = complex_harmonic_oscillator(omega, gamma)
grid = PhaseGrid.square(7.0, 101)
spec = InitialStateSpec.from_qp("displaced_fock", 2, 4.0, 2.0)
t = 2 * math.pi / 3

# Classical route: trace every grid point back along its characteristic.
classical = classical_husimi(H, spec, grid, t)

# Closed form for the same field.
exact = complex_ho_husimi_oracle(2, spec.zc, omega, gamma, t, grid.z())
print("classical vs closed form, sup error:", np.abs(classical.values - exact).max())

# Quantum route: propagate the Fock vector and take coherent-state overlaps.
settings = PropagationSettings(n_max=128, dt=1e-3)
psi = propagate(H, spec.fock_state(128), t, settings)
quantum = quantum_husimi(psi, grid, t)
print("quantum vs classical, sup error:  ", np.abs(quantum.values - classical.values).max())

# The Husimi integral tracks the squared norm, which decays.
print("norm^2 from the state:             ", psi.norm2)
print("integral of Q over the grid / 2pi: ", integrate_field(quantum))

# Where does the ring go? Its centre spirals in as zc exp(-i(omega - i gamma)t).
centre = spec.zc * np.exp(-1j * complex(omega, -gamma) * t)
k = int(np.nanargmax(classical.values))
q, p = grid.coords()
print(f"ring centre (q, p): ({centre.real * math.sqrt(2):.3f}, {centre.imag * math.sqrt(2):.3f})")
print(f"a grid point on the crest of the ring: ({q[k]:.3f}, {p[k]:.3f})")
