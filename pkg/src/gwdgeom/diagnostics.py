"""Energies and conservation monitors for Gaussian wavepacket trajectories."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .effective import MethodKind, coefficients_at
from .integrators import StepPlan, TrajectoryRecord, run_to
from .states import (
    GaussianState,
    distance,
    momentum_covariance,
    position_covariance,
    state_norm,
    to_heller,
)


@dataclass(frozen=True)
class EnergyReport:
    kinetic: float
    potential_exact: float
    potential_effective: float
    E: float
    E_eff: float


def _uncounted(pot):
    # observers must not show up in evaluation counts
    return getattr(pot, "inner", pot)


def kinetic_energy(state: GaussianState) -> float:
    """``T(p) + Tr(m^-1 Cov(p)) / 2``."""
    covp = momentum_covariance(to_heller(state))
    v = state.minv @ state.p
    return 0.5 * float(state.p @ v) + 0.5 * float(np.sum(state.minv * covp))


def energy_report(method, pot, state: GaussianState) -> EnergyReport:
    method = MethodKind.parse(method)
    pot = _uncounted(pot)
    sigma = position_covariance(state)
    T = kinetic_energy(state)
    V_exact = float(pot.expectation(state.q, sigma, 0))
    V0, _, V2 = coefficients_at(method, pot, state.q, sigma)
    V_eff = float(V0) + 0.5 * float(np.sum(V2 * sigma))
    return EnergyReport(T, V_exact, V_eff, T + V_exact, T + V_eff)


def energy_observer(method, pot):
    """Observer returning the :class:`EnergyReport` of each sampled state."""
    return lambda s: energy_report(method, pot, s)


def norm_deviation(state: GaussianState) -> float:
    return abs(state_norm(state) - 1.0)


def effective_energy_drift(trajectory) -> float:
    """``max_t |E_eff(t) - E_eff(0)|`` over a record with an ``energy`` observer.

    Also accepts a plain sequence of effective energies.
    """
    if isinstance(trajectory, TrajectoryRecord):
        values = [r.E_eff for r in trajectory.samples["energy"]]
    else:
        values = list(trajectory)
    if not values:
        raise ValueError("trajectory has no energy samples")
    e = np.asarray(values, dtype=float)
    return float(np.max(np.abs(e - e[0])))


def energy_drift(trajectory: TrajectoryRecord) -> float:
    """Same as :func:`effective_energy_drift` for the exact energy."""
    e = np.array([r.E for r in trajectory.samples["energy"]])
    return float(np.max(np.abs(e - e[0])))


def reversibility_defect(s0: GaussianState, plan: StepPlan, pot, n_steps: int) -> float:
    """Distance between ``s0`` and the state propagated forward and then back."""
    if n_steps == 0:
        return 0.0
    forward = run_to(s0, plan, pot, n_steps)
    back = run_to(forward, plan.with_dt(-plan.dt), pot, n_steps)
    return distance(back, s0)


def convergence_error(s0: GaussianState, plan: StepPlan, pot, n_steps: int) -> float:
    """Distance between runs with ``dt`` and ``dt/2`` to the same final time."""
    coarse = run_to(s0, plan, pot, n_steps)
    fine = run_to(s0, plan.with_dt(0.5 * plan.dt), pot, 2 * n_steps)
    return distance(coarse, fine)


def fit_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


# step Jacobians and the symplectic-structure residual live in their own module
from .symplectic import (  # noqa: E402
    block_condition_defects,
    omega,
    step_jacobian_kinetic,
    step_jacobian_potential,
    symplecticity_residual,
)
