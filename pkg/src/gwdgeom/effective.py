"""Effective quadratic potentials of the three Gaussian wavepacket methods.

Each method replaces ``V`` by ``V0 + V1^T x + x^T V2 x / 2`` around the
Gaussian's center, with coefficients that depend on the wavepacket only
through its center ``q`` and position covariance ``sigma``:

=====  =========================  ===================================  ==========
method V0                         V1                                   V2
=====  =========================  ===================================  ==========
LHA    V(q)                       V'(q)                                V''(q)
LCA    V(q)                       V'(q) + V'''(q):sigma / 2            V''(q)
VAR    <V> - Tr(<V''> sigma) / 2  <V'>                                 <V''>
=====  =========================  ===================================  ==========
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .states import GaussianState, position_covariance


class MethodKind(enum.Enum):
    LHA = "lha"
    LCA = "lca"
    VAR = "var"

    @classmethod
    def parse(cls, value) -> "MethodKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown method {value!r}; expected one of lha, lca, var") from None


@dataclass(frozen=True, eq=False)
class EffectiveCoefficients:
    V0: float
    V1: np.ndarray
    V2: np.ndarray
    method: MethodKind


def coefficients_at(method: MethodKind, pot, q: np.ndarray, sigma: np.ndarray):
    """``(V0, V1, V2)`` for center ``q`` and covariance ``sigma``.

    Counts as one potential evaluation when ``pot`` is a counting wrapper.
    """
    count = getattr(pot, "count", None)
    if count is not None:
        count()
        pot = pot.inner
    if method is MethodKind.LHA:
        if hasattr(pot, "derivatives"):
            d = pot.derivatives(q, (0, 1, 2))
            return d[0], d[1], d[2]
        return pot.value(q), pot.derivative(q, 1), pot.derivative(q, 2)
    if method is MethodKind.LCA:
        if hasattr(pot, "lca_terms"):
            V, g, H, t = pot.lca_terms(q, sigma)
        else:
            V, g, H = pot.value(q), pot.derivative(q, 1), pot.derivative(q, 2)
            t = pot.third_contract(q, sigma)
        return V, g + 0.5 * t, H
    if method is MethodKind.VAR:
        if hasattr(pot, "expectations"):
            e = pot.expectations(q, sigma, (0, 1, 2))
            eV, eg, eH = e[0], e[1], e[2]
        else:
            eV, eg, eH = (pot.expectation(q, sigma, n) for n in (0, 1, 2))
        return float(eV) - 0.5 * float(np.sum(eH * sigma)), eg, eH
    raise ValueError(f"unknown method {method!r}")


def effective_coefficients(method, pot, state: GaussianState) -> EffectiveCoefficients:
    method = MethodKind.parse(method)
    sigma = position_covariance(state)
    V0, V1, V2 = coefficients_at(method, pot, state.q, sigma)
    V2 = 0.5 * (V2 + V2.T)
    return EffectiveCoefficients(float(V0), np.asarray(V1, dtype=float), V2, method)


def effective_potential_mean(method, pot, state: GaussianState) -> float:
    """``<V_eff> = V0 + Tr(V2 sigma) / 2`` (the linear term averages to zero)."""
    c = effective_coefficients(method, pot, state)
    sigma = position_covariance(state)
    return c.V0 + 0.5 * float(np.sum(c.V2 * sigma))
