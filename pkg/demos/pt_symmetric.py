"""
PT-symmetric anharmonic oscillator: bounded gain and loss
==========================================================

K = (p^2 + q^2)/2 + beta/4 (p^2 + q^2)^2 - i eps q is not Hermitian, yet
its characteristics close, and the weight carried along each of them
returns to one after every turn.
"""

import math

import numpy as np

from husimiflow import (
    PhasePoint,
    PropagationSettings,
    adjoint_coherent_norm,
    displaced_fock_vector,
    find_fixed_points,
    integrate_characteristic,
    orbit_period,
    propagate,
    pt_anharmonic_oscillator,
    pt_reflect,
)

H = pt_anharmonic_oscillator(beta=0.25, eps=1.0)

(fp,) = find_fixed_points(H)
print(f"single fixed point at p = {fp.point.p:.12f} ({fp.kind})")
print("cubic residual p^3 + 4p + 4 =", fp.point.p**3 + 4 * fp.point.p + 4)

# One full turn of a characteristic: the accumulated weight comes back to 1.
start = PhasePoint(2.0, 1.0)
T = orbit_period(H, start)
traj = integrate_characteristic(H, start, T)
w = np.exp(traj.log_w)
print(f"period {T:.6f}; weight ranges over [{w.min():.4f}, {w.max():.4f}], ends at {w[-1]:.8f}")

# The quantum norm of a coherent state under the adjoint flow, next to the
# classical weight at the same point. They agree only roughly: the quartic
# term makes the correspondence approximate.
s = PropagationSettings(n_max=80, dt=1e-4)
for t in (0.25, 0.5, 1.0):
    back = integrate_characteristic(H, start, -t)
    print(f"t = {t}: quantum {adjoint_coherent_norm(H, start, t, s):.4f}, "
          f"classical {math.exp(-back.log_w[-1]):.4f}")

# PT is antiunitary: reflecting an evolved state and evolving it again for
# the same time lands on the reflected initial state.
psi0 = displaced_fock_vector(3, complex(2, 1) / math.sqrt(2), 70)
s = PropagationSettings(n_max=70, dt=1e-4)
back = propagate(H, pt_reflect(propagate(H, psi0, 0.5, s)), 0.5, s)
print("PT round trip error:", np.abs(back.amps - pt_reflect(psi0).amps).max())
