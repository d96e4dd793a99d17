"""Gaussian wavepacket dynamics with high-order geometric integrators.

Local harmonic (LHA), local cubic variational (LCA) and fully variational
(VAR) Gaussian wavepacket propagation in the Hagedorn parametrization,
split-composition integrators of orders 2 to 10, conservation diagnostics,
a grid reference solver and absorption spectra.
"""
from .diagnostics import (
    EnergyReport,
    convergence_error,
    effective_energy_drift,
    energy_observer,
    energy_report,
    fit_slope,
    norm_deviation,
    reversibility_defect,
)
from .effective import EffectiveCoefficients, MethodKind, effective_coefficients
from .integrators import (
    CompositionScheme,
    Splitting,
    StepPlan,
    TrajectoryRecord,
    composed_step,
    default_scheme,
    kinetic_flow,
    make_scheme,
    potential_flow,
    propagate,
    rk4_step,
    run_to,
    second_order_step,
    step,
)
from .potentials import (
    CoupledMorse,
    CountingPotential,
    HarmonicPotential,
    PotentialRangeError,
    harmonic_ground_state,
)
from .states import (
    GaussianState,
    HellerParams,
    distance,
    from_heller,
    norm,
    overlap,
    position_covariance,
    state_distance,
    state_norm,
    to_heller,
)
from .symplectic import block_condition_defects, symplecticity_residual

__version__ = "0.1.0"
