"""Husimi phase-space dynamics generated by non-Hermitian Hamiltonians.

Two routes are provided: the semiclassical flow, where the initial Husimi
function is transported along characteristics and weighted by a norm
landscape, and exact propagation in a truncated Fock basis.
"""

from .classical_flow import (
    IntegratorSettings,
    backtrace,
    backtrace_grid,
    classical_husimi,
    default_seeds,
    find_fixed_points,
    integrate_characteristic,
    integrate_characteristics,
    norm_landscape,
    orbit_period,
)
from .grid_io import (
    PhaseGrid,
    ScalarField,
    fields_identical,
    integrate_field,
    read_csv,
    read_field,
    renormalize_max,
    write_csv,
    write_field,
)
from .hamiltonian import (
    Hamiltonian,
    PhasePoint,
    build_hamiltonian,
    complex_harmonic_oscillator,
    damped_anharmonic_oscillator,
    harmonic_oscillator,
    pt_anharmonic_oscillator,
)
from .quantum_flow import (
    PropagationSettings,
    adjoint_coherent_norm,
    expectation_a,
    propagate,
    propagate_times,
    pt_reflect,
    quantum_husimi,
)
from .states import (
    FockState,
    InitialStateSpec,
    coherent_state,
    complex_ho_husimi_oracle,
    complex_ho_norm_landscape_oracle,
    displaced_fock_vector,
    number_state,
)

__version__ = "0.1.0"
