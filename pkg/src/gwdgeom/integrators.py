"""Split-operator integrators for Gaussian wavepacket dynamics.

The effective Hamiltonian splits into a kinetic part and a state-dependent
quadratic potential.  In Hagedorn's variables both parts are solved exactly:

* kinetic flow:   ``q += t m^-1 p``, ``Q += t m^-1 P``, ``S += t T(p)``
* potential flow: ``p -= t V1``, ``P -= t V2 Q``, ``S -= t V0``,
  with ``(V0, V1, V2)`` frozen at the (constant) ``q`` and ``Q``.

A symmetric second-order step (TVT or VTV) is composed with symmetric
coefficient sequences to reach orders 4-10.  Classical RK4 on the same
variables is included as a non-geometric baseline.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .effective import MethodKind, coefficients_at
from .potentials import PotentialRangeError
from .states import GaussianState, position_covariance

# Kahan & Li (1997), s9odr6a and s17odr8a; Sofroniou & Spaletta (2005), s35odr10.
# Only the first half (through the middle coefficient) is listed.
_KAHAN_LI_6 = (
    0.39216144400731413928,
    0.33259913678935943860,
    -0.70624617255763935981,
    0.082213596293550800230,
    0.79854399093482996340,
)
_KAHAN_LI_8 = (
    0.13020248308889008088,
    0.56116298177510838456,
    -0.38947496264484728641,
    0.15884190655515560090,
    -0.39590389413323757734,
    0.18453964097831570709,
    0.25837438768632204729,
    0.29501172360931029887,
    -0.60550853383003451170,
)
_SOFRONIOU_SPALETTA_10 = (
    0.07879572252168641926390768,
    0.31309610341510852776481247,
    0.02791838323507806610952027,
    -0.22959284159390709415121340,
    0.13096206107716486317465686,
    -0.26973340565451071434460973,
    0.07497334315589143566613711,
    0.11199342399981020488957508,
    0.36613344954622675119314812,
    -0.39910563013603589787862981,
    0.10308739852747107731580277,
    0.41143087395589023782070412,
    -0.00486636058313526176219566,
    -0.39203335370863990644808194,
    0.05194250296244964703718290,
    0.05066509075992449633587434,
    0.04967437063972987905456880,
    0.04931773575959453791768001,
)


class SchemeName(enum.Enum):
    IDENTITY2 = "identity2"
    TRIPLE_JUMP = "triplejump"
    SUZUKI = "suzuki"
    KAHAN_LI_6 = "kahanli6"
    KAHAN_LI_8 = "kahanli8"
    SOFRONIOU_SPALETTA_10 = "sofroniouspaletta10"

    @classmethod
    def parse(cls, value) -> "SchemeName":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "").replace("_", "").replace(" ", "")
        aliases = {"identity": "identity2", "tvt": "identity2", "kl6": "kahanli6", "kl8": "kahanli8",
                   "ss10": "sofroniouspaletta10", "yoshida": "triplejump"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown composition scheme {value!r}") from None


@dataclass(frozen=True, eq=False)
class CompositionScheme:
    """Symmetric composition of a second-order symmetric step.

    ``gammas`` are the fractions of ``dt`` given to each second-order substep.
    ``levels`` holds ``(p, coefficients)`` for schemes built by recursive
    lifts from order ``p`` to ``p + 2``; it is empty for the optimized
    non-recursive schemes.
    """

    name: SchemeName
    order: int
    gammas: tuple[float, ...]
    levels: tuple[tuple[int, tuple[float, ...]], ...] = ()

    @property
    def stages(self) -> int:
        return len(self.gammas)

    @property
    def partial_sums(self) -> np.ndarray:
        return np.cumsum(self.gammas)


def _mirror(half) -> tuple[float, ...]:
    return tuple(half) + tuple(half[-2::-1])


def _lift(p: int, stages: int) -> tuple[float, ...]:
    # symmetric coefficients with sum 1 and sum gamma^(p+1) = 0
    if stages == 3:
        g = 1.0 / (2.0 - 2.0 ** (1.0 / (p + 1)))
        return (g, 1.0 - 2.0 * g, g)
    g = 1.0 / (4.0 - 4.0 ** (1.0 / (p + 1)))
    return (g, g, 1.0 - 4.0 * g, g, g)


def make_scheme(order: int, name="suzuki") -> CompositionScheme:
    """Composition coefficients for a supported ``(order, name)`` pair."""
    name = SchemeName.parse(name)
    order = int(order)
    fixed = {
        SchemeName.KAHAN_LI_6: (6, _KAHAN_LI_6),
        SchemeName.KAHAN_LI_8: (8, _KAHAN_LI_8),
        SchemeName.SOFRONIOU_SPALETTA_10: (10, _SOFRONIOU_SPALETTA_10),
    }
    if name in fixed:
        expected, half = fixed[name]
        if order != expected:
            raise ValueError(f"{name.value} has order {expected}, not {order}")
        return CompositionScheme(name, order, _mirror(half))
    if name is SchemeName.IDENTITY2:
        if order != 2:
            raise ValueError("identity2 is the plain second-order step")
        return CompositionScheme(name, 2, (1.0,))
    if order not in (2, 4, 6, 8, 10):
        raise ValueError(f"unsupported order {order}")
    stages = 3 if name is SchemeName.TRIPLE_JUMP else 5
    gammas = [1.0]
    levels = []
    for p in range(2, order, 2):
        level = _lift(p, stages)
        levels.append((p, level))
        gammas = [g * c for g in level for c in gammas]
    return CompositionScheme(name, order, tuple(gammas), tuple(levels))


DEFAULT_SCHEMES = {
    2: ("identity2", 2),
    4: ("suzuki", 4),
    6: ("kahanli6", 6),
    8: ("kahanli8", 8),
    10: ("sofroniouspaletta10", 10),
}


def default_scheme(order: int) -> CompositionScheme:
    """The optimal scheme of the given order (Suzuki for 4, Kahan-Li for 6 and 8, ...)."""
    if int(order) not in DEFAULT_SCHEMES:
        raise ValueError(f"unsupported order {order}; expected one of {sorted(DEFAULT_SCHEMES)}")
    name, o = DEFAULT_SCHEMES[int(order)]
    return make_scheme(o, name)


class Splitting(enum.Enum):
    TVT = "tvt"
    VTV = "vtv"

    @classmethod
    def parse(cls, value) -> "Splitting":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown splitting {value!r}; expected tvt or vtv") from None


def flow_sequence(splitting: Splitting, scheme: CompositionScheme) -> tuple[tuple[str, float], ...]:
    """Elementary flows of one composed step as ``("T" | "V", fraction of dt)``.

    Adjacent flows of the same kind are merged; each flow is exact, so this
    is an algebraic identity.
    """
    outer, inner = ("T", "V") if splitting is Splitting.TVT else ("V", "T")
    seq: list[list] = []
    for g in scheme.gammas:
        for kind, frac in ((outer, 0.5 * g), (inner, g), (outer, 0.5 * g)):
            if seq and seq[-1][0] == kind:
                seq[-1][1] += frac
            else:
                seq.append([kind, frac])
    return tuple((k, f) for k, f in seq)


@dataclass(frozen=True, eq=False)
class StepPlan:
    """Everything that defines one time step except the potential."""

    method: MethodKind
    splitting: Splitting = Splitting.TVT
    scheme: CompositionScheme = field(default_factory=lambda: make_scheme(2, "identity2"))
    dt: float = 0.01
    integrator: str = "geometric"

    def __post_init__(self):
        object.__setattr__(self, "method", MethodKind.parse(self.method))
        object.__setattr__(self, "splitting", Splitting.parse(self.splitting))
        if self.integrator not in ("geometric", "rk4"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.dt == 0 or not math.isfinite(self.dt):
            raise ValueError("time step must be finite and nonzero")
        object.__setattr__(self, "flows", flow_sequence(self.splitting, self.scheme))

    def with_dt(self, dt: float) -> "StepPlan":
        return StepPlan(self.method, self.splitting, self.scheme, dt, self.integrator)

    @property
    def order(self) -> int:
        return 4 if self.integrator == "rk4" else self.scheme.order

    @property
    def label(self) -> str:
        if self.integrator == "rk4":
            return "RK4"
        name = self.scheme.name.value
        suffix = "" if name[-1].isdigit() else str(self.scheme.order)
        return f"{self.splitting.name}-{name}{suffix}"


# elementary flows ------------------------------------------------------------


def _det_arg_increment(state: GaussianState, t: float) -> float:
    """Continuous change of ``arg det Q`` under the kinetic flow for time ``t``.

    ``det Q_t / det Q_0 = prod_j (1 + t lambda_j)`` with ``lambda`` the
    eigenvalues of ``m^-1 A``, all in the open upper half plane; each factor
    therefore stays in the half plane of sign ``t`` along the flow, and its
    argument is the principal one taken with that sign.
    """
    MP = state.minv @ state.P
    if state.dim == 1:
        lam = np.array([MP[0, 0] / state.Q[0, 0]])
    else:
        lam = np.linalg.eigvals(np.linalg.solve(state.Q, MP))
    z = 1.0 + t * lam
    arg = np.angle(z)
    # Im z = t Im(lambda) has the sign of t; round-off may flip it only when z
    # is close to the negative real axis, where the principal value jumps by 2 pi
    flipped = (np.sign(arg) == -np.sign(t)) & (np.abs(arg) > 0.5 * np.pi)
    arg = np.where(flipped, arg + 2.0 * np.pi * np.sign(t), arg)
    return float(np.sum(arg))


def kinetic_flow(state: GaussianState, t: float) -> GaussianState:
    """Exact free evolution for time ``t``."""
    if t == 0:
        return state
    v = state.minv @ state.p
    return state.evolve(
        q=state.q + t * v,
        Q=state.Q + t * (state.minv @ state.P),
        S=state.S + t * 0.5 * float(state.p @ v),
        det_arg=state.det_arg + _det_arg_increment(state, t),
    )


def potential_flow(state: GaussianState, t: float, method, pot) -> GaussianState:
    """Exact evolution in the frozen effective potential for time ``t``."""
    if t == 0:
        return state
    method = MethodKind.parse(method)
    V0, V1, V2 = coefficients_at(method, pot, state.q, position_covariance(state))
    return state.evolve(
        p=state.p - t * V1,
        P=state.P - t * (V2 @ state.Q),
        S=state.S - t * float(V0),
    )


def second_order_step(state: GaussianState, plan: StepPlan, pot) -> GaussianState:
    """One TVT or VTV step of size ``plan.dt`` (the scheme is ignored)."""
    seq = flow_sequence(plan.splitting, make_scheme(2, "identity2"))
    return _apply_flows(state, seq, plan.dt, plan.method, pot)


def _apply_flows(state, seq, dt, method, pot):
    for kind, frac in seq:
        if kind == "T":
            state = kinetic_flow(state, frac * dt)
        else:
            state = potential_flow(state, frac * dt, method, pot)
    return state


def composed_step(state: GaussianState, plan: StepPlan, pot) -> GaussianState:
    """One step of the composed geometric integrator."""
    return _apply_flows(state, plan.flows, plan.dt, plan.method, pot)


# RK4 baseline -----------------------------------------------------------------


def _rhs(y, method, pot):
    q, p, Q, P, S, arg, hbar, minv = y
    sigma = 0.5 * hbar * (Q @ Q.conj().T).real
    sigma = 0.5 * (sigma + sigma.T)
    V0, V1, V2 = coefficients_at(method, pot, q, sigma)
    MP = minv @ P
    darg = float(np.trace(np.linalg.solve(Q, MP)).imag)
    return (minv @ p, -np.asarray(V1, dtype=float), MP, -(V2 @ Q), 0.5 * float(p @ minv @ p) - float(V0), darg)


def rk4_step(state: GaussianState, dt: float, method, pot) -> GaussianState:
    """Classical fourth-order Runge-Kutta on ``(q, p, Q, P, S, arg det Q)``."""
    method = MethodKind.parse(method)
    y0 = (state.q, state.p, state.Q, state.P, state.S, state.det_arg)

    def shifted(k, h):
        return tuple(a + h * b for a, b in zip(y0, k))

    def f(y):
        return _rhs((*y, state.hbar, state.minv), method, pot)

    k1 = f(y0)
    k2 = f(shifted(k1, 0.5 * dt))
    k3 = f(shifted(k2, 0.5 * dt))
    k4 = f(shifted(k3, dt))
    y = tuple(a + dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4) for a, b1, b2, b3, b4 in zip(y0, k1, k2, k3, k4))
    return state.evolve(q=y[0], p=y[1], Q=y[2], P=y[3], S=float(y[4]), det_arg=float(y[5]))


def step(state: GaussianState, plan: StepPlan, pot) -> GaussianState:
    if plan.integrator == "rk4":
        return rk4_step(state, plan.dt, plan.method, pot)
    return composed_step(state, plan, pot)


# trajectories -----------------------------------------------------------------


@dataclass
class TrajectoryRecord:
    """Observer samples along a trajectory.

    ``samples[name][k]`` is the value of observer ``name`` at ``times[k]``.
    On a range error the record is partial: ``failed`` is set and
    ``fail_step`` holds the index of the step that could not be taken.
    """

    initial: GaussianState
    final: GaussianState
    times: list = field(default_factory=list)
    samples: dict = field(default_factory=dict)
    states: list = field(default_factory=list)
    steps_done: int = 0
    failed: bool = False
    fail_step: int | None = None
    error: str | None = None

    def series(self, name: str) -> np.ndarray:
        return np.asarray(self.samples[name])


Observer = Callable[[GaussianState], object]


def propagate(
    s0: GaussianState,
    plan: StepPlan,
    pot,
    n_steps: int,
    observers: Mapping[str, Observer] | None = None,
    stride: int = 1,
    keep_states: bool = False,
) -> TrajectoryRecord:
    """Take ``n_steps`` steps, sampling the observers every ``stride`` steps.

    The initial state is always sampled, and so is the final state.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    if stride < 1:
        raise ValueError("stride must be positive")
    observers = dict(observers or {})
    rec = TrajectoryRecord(initial=s0, final=s0, samples={k: [] for k in observers})

    def sample(n, s):
        rec.times.append(n * plan.dt)
        for k, obs in observers.items():
            rec.samples[k].append(obs(s))
        if keep_states:
            rec.states.append(s)

    state = s0
    sample(0, state)
    for n in range(1, n_steps + 1):
        try:
            new = step(state, plan, pot)
            if n % stride == 0 or n == n_steps:
                # observers may need a wider range than the step (e.g. averages)
                sample(n, new)
        except (PotentialRangeError, FloatingPointError, np.linalg.LinAlgError) as exc:
            rec.failed, rec.fail_step, rec.error = True, n, str(exc)
            _truncate(rec, n * plan.dt)
            break
        state = new
        rec.steps_done = n
    rec.final = state
    return rec


def _truncate(rec: TrajectoryRecord, t_bad: float) -> None:
    # drop a partially recorded sample of the failed step
    k = len(rec.times)
    if k and rec.times[-1] == t_bad:
        rec.times.pop()
        k -= 1
    for values in rec.samples.values():
        del values[k:]
    del rec.states[k:]


def run_to(s0: GaussianState, plan: StepPlan, pot, n_steps: int) -> GaussianState:
    """Final state after ``n_steps`` steps, raising on failure."""
    state = s0
    for _ in range(n_steps):
        state = step(state, plan, pot)
    return state
