"""Potential-energy surfaces with analytic derivatives and Gaussian averages.

Both models expose the same small interface used by the propagators:

``value(q)``, ``derivative(q, n)`` (rank-``n`` tensor, ``n <= 4``),
``expectation(q, sigma, n)`` (average over a Gaussian density with center
``q`` and position covariance ``sigma``), and the cheap contractions
``third_contract(q, sigma)`` = ``V'''_{ijk} sigma_{jk}`` and
``fourth_contract(q, sigma)`` = ``V''''_{ijkl} sigma_{kl}``.

The coupled Morse surface is a sum of one-dimensional Morse oscillators plus
a Morse function of the single coordinate ``a^T (q - q_eq)``.  Every term has
the form ``d (1 - exp(-s))^2`` of a linear coordinate ``s``, so the rank-n
derivative is a scalar times ``a^{(x)n}`` and the Gaussian average follows
from ``<exp(-k s)> = exp(-k s_0 + k^2 var(s) / 2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .states import GaussianState, as_mass_matrix, position_covariance

DEFAULT_EXP_CAP = 200.0


class PotentialRangeError(ArithmeticError):
    """Raised when a Morse exponent leaves the representable range."""


def _outer_power(a: np.ndarray, n: int) -> np.ndarray:
    if n == 0:
        return np.array(1.0)
    return reduce(np.multiply.outer, [a] * n)


def _diag_tensor(vals: np.ndarray, n: int) -> np.ndarray:
    D = vals.size
    if n == 0:
        return np.array(vals.sum())
    if n == 1:
        return vals.copy()
    T = np.zeros((D,) * n)
    idx = np.arange(D)
    T[(idx,) * n] = vals
    return T


def _morse_shape(y, y2, n: int):
    """n-th derivative of ``(1 - e^{-s})^2`` w.r.t. ``s``, given ``y = e^{-s}`` and ``y2 = e^{-2s}``.

    ``y`` and ``y2`` may be replaced by their Gaussian averages.
    """
    if n == 0:
        return 1.0 - 2.0 * y + y2
    return -2.0 * (-1.0) ** n * y + (-2.0) ** n * y2


class PotentialModel:
    """Interface shared by all potential surfaces."""

    dim: int
    max_order = 4

    def value(self, q) -> float:
        raise NotImplementedError

    def derivative(self, q, order: int) -> np.ndarray:
        raise NotImplementedError

    def expectation(self, q, sigma, order: int) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, q) -> np.ndarray:
        return self.derivative(q, 1)

    def hessian(self, q) -> np.ndarray:
        return self.derivative(q, 2)

    def third_contract(self, q, sigma) -> np.ndarray:
        return np.einsum("ijk,jk->i", self.derivative(q, 3), sigma)

    def fourth_contract(self, q, sigma) -> np.ndarray:
        return np.einsum("ijkl,kl->ij", self.derivative(q, 4), sigma)

    def _check_order(self, order: int, lo: int = 0) -> None:
        if not lo <= order <= self.max_order:
            raise ValueError(f"derivative order {order} not supported (allowed {lo}..{self.max_order})")


@dataclass(frozen=True, eq=False)
class CoupledMorse(PotentialModel):
    """D one-dimensional Morse oscillators plus a multidimensional Morse coupling.

    Parameters are given as dissociation energies and dimensionless
    anharmonicities; decay parameters follow from ``a = chi sqrt(8 d_e)``.
    """

    q_eq: np.ndarray
    V_eq: float
    de_prime: float
    chi_prime: np.ndarray
    de_cpl: float = 0.0
    chi_cpl: np.ndarray | None = None
    exp_cap: float = DEFAULT_EXP_CAP
    a_prime: np.ndarray = field(init=False)
    a_cpl: np.ndarray = field(init=False)

    def __post_init__(self):
        q_eq = np.atleast_1d(np.asarray(self.q_eq, dtype=float))
        D = q_eq.size
        chi_p = np.broadcast_to(np.asarray(self.chi_prime, dtype=float), (D,)).copy()
        chi_c = np.zeros(D) if self.chi_cpl is None else np.broadcast_to(np.asarray(self.chi_cpl, dtype=float), (D,)).copy()
        if self.de_prime <= 0 or np.any(chi_p <= 0):
            raise ValueError("per-mode dissociation energy and anharmonicities must be positive")
        if self.de_cpl < 0:
            raise ValueError("coupling dissociation energy must be nonnegative")
        object.__setattr__(self, "q_eq", q_eq)
        object.__setattr__(self, "V_eq", float(self.V_eq))
        object.__setattr__(self, "de_prime", float(self.de_prime))
        object.__setattr__(self, "de_cpl", float(self.de_cpl))
        object.__setattr__(self, "chi_prime", chi_p)
        object.__setattr__(self, "chi_cpl", chi_c)
        object.__setattr__(self, "a_prime", chi_p * np.sqrt(8.0 * self.de_prime))
        object.__setattr__(self, "a_cpl", chi_c * np.sqrt(8.0 * self.de_cpl))

    @property
    def dim(self) -> int:
        return self.q_eq.size

    # exp(-k s) factors and their Gaussian averages -------------------------

    def _exp(self, arg):
        arg = np.asarray(arg, dtype=float)
        if np.any(arg > self.exp_cap):
            raise PotentialRangeError(
                f"Morse exponent {np.max(arg):.3g} exceeds cap {self.exp_cap:g}; trajectory left the bound region"
            )
        return np.exp(arg)

    def _factors(self, q):
        x = np.asarray(q, dtype=float) - self.q_eq
        s1 = self.a_prime * x
        y1 = self._exp(-s1)
        if self.de_cpl > 0:
            y = float(self._exp(-self.a_cpl @ x))
        else:
            y = 0.0
        return y1, y1 * y1, y, y * y

    def _mean_factors(self, q, sigma):
        x = np.asarray(q, dtype=float) - self.q_eq
        sigma = np.asarray(sigma, dtype=float)
        s1 = self.a_prime * x
        v1 = self.a_prime**2 * np.diag(sigma)
        y1 = self._exp(-s1 + 0.5 * v1)
        y1_2 = self._exp(-2.0 * s1 + 2.0 * v1)
        if self.de_cpl > 0:
            s = self.a_cpl @ x
            v = self.a_cpl @ sigma @ self.a_cpl
            y = float(self._exp(-s + 0.5 * v))
            y_2 = float(self._exp(-2.0 * s + 2.0 * v))
        else:
            y = y_2 = 0.0
        return y1, y1_2, y, y_2

    def _assemble(self, factors, order: int) -> np.ndarray:
        y1, y1_2, y, y_2 = factors
        mode = self.de_prime * _morse_shape(y1, y1_2, order) * self.a_prime**order
        out = _diag_tensor(mode, order)
        if self.de_cpl > 0:
            out = out + self.de_cpl * _morse_shape(y, y_2, order) * _outer_power(self.a_cpl, order)
        if order == 0:
            return np.array(self.V_eq + float(out))
        return out

    # public interface ------------------------------------------------------

    def value(self, q) -> float:
        return float(self._assemble(self._factors(q), 0))

    def derivative(self, q, order: int) -> np.ndarray:
        self._check_order(order, lo=1)
        return self._assemble(self._factors(q), order)

    def on_grid(self, points) -> np.ndarray:
        """Values at an array of points with shape ``(..., D)`` (no range cap)."""
        x = np.asarray(points, dtype=float) - self.q_eq
        out = self.V_eq + self.de_prime * np.sum(np.expm1(-x * self.a_prime) ** 2, axis=-1)
        if self.de_cpl > 0:
            out = out + self.de_cpl * np.expm1(-(x @ self.a_cpl)) ** 2
        return out

    def derivatives(self, q, orders) -> dict[int, np.ndarray]:
        """Several derivative tensors sharing one evaluation of the exponentials."""
        f = self._factors(q)
        return {n: (self._assemble(f, n) if n else float(self._assemble(f, 0))) for n in orders}

    def expectation(self, q, sigma, order: int) -> np.ndarray:
        self._check_order(order)
        out = self._assemble(self._mean_factors(q, sigma), order)
        return float(out) if order == 0 else out

    def expectations(self, q, sigma, orders) -> dict[int, np.ndarray]:
        f = self._mean_factors(q, sigma)
        return {n: (self._assemble(f, n) if n else float(self._assemble(f, 0))) for n in orders}

    def _contract(self, factors, order: int, sigma) -> np.ndarray:
        # rank-(order-2) result of contracting the last two indices with sigma
        y1, y1_2, y, y_2 = factors
        mode = self.de_prime * _morse_shape(y1, y1_2, order) * self.a_prime**order * np.diag(sigma)
        out = _diag_tensor(mode, order - 2)
        if self.de_cpl > 0:
            w = self.a_cpl @ sigma @ self.a_cpl
            out = out + self.de_cpl * _morse_shape(y, y_2, order) * w * _outer_power(self.a_cpl, order - 2)
        return out

    def third_contract(self, q, sigma) -> np.ndarray:
        return self._contract(self._factors(q), 3, np.asarray(sigma, dtype=float))

    def fourth_contract(self, q, sigma) -> np.ndarray:
        return self._contract(self._factors(q), 4, np.asarray(sigma, dtype=float))

    def tensors_mp(self, q, sigma, orders, average: bool = False) -> dict:
        """Derivative tensors (or Gaussian averages) as mpmath object arrays.

        Inputs are converted exactly; used where double-precision rounding of
        the tensors themselves must not dominate a measurement.
        """
        import mpmath as mp

        D = self.dim
        x = [mp.mpf(float(v)) - mp.mpf(float(e)) for v, e in zip(q, self.q_eq)]
        ap = [mp.mpf(float(v)) for v in self.a_prime]
        ac = [mp.mpf(float(v)) for v in self.a_cpl]
        de1, de = mp.mpf(self.de_prime), mp.mpf(self.de_cpl)
        y1, y1_2 = [], []
        for j in range(D):
            s1 = ap[j] * x[j]
            v1 = ap[j] ** 2 * sigma[j][j] if average else 0
            y1.append(mp.exp(-s1 + v1 / 2))
            y1_2.append(mp.exp(-2 * s1 + 2 * v1))
        s = mp.fsum(ac[j] * x[j] for j in range(D))
        v = mp.fsum(ac[i] * sigma[i][j] * ac[j] for i in range(D) for j in range(D)) if average else 0
        y, y_2 = mp.exp(-s + v / 2), mp.exp(-2 * s + 2 * v)
        out = {}
        for n in orders:
            T = np.empty((D,) * n, dtype=object)
            for idx in np.ndindex(*T.shape):
                val = de * _morse_shape(y, y_2, n)
                for i in idx:
                    val = val * ac[i]
                if n and all(i == idx[0] for i in idx):
                    val += de1 * _morse_shape(y1[idx[0]], y1_2[idx[0]], n) * ap[idx[0]] ** n
                T[idx] = val
            out[n] = T
        return out

    def lca_terms(self, q, sigma):
        """``(V, V', V'', V''' : sigma)`` from a single evaluation of the exponentials."""
        f = self._factors(q)
        return (
            float(self._assemble(f, 0)),
            self._assemble(f, 1),
            self._assemble(f, 2),
            self._contract(f, 3, np.asarray(sigma, dtype=float)),
        )


@dataclass(frozen=True, eq=False)
class HarmonicPotential(PotentialModel):
    """``V(q) = V_eq + (q - q_eq)^T k (q - q_eq) / 2``."""

    q_eq: np.ndarray
    k: np.ndarray
    V_eq: float = 0.0

    def __post_init__(self):
        q_eq = np.atleast_1d(np.asarray(self.q_eq, dtype=float))
        D = q_eq.size
        k = np.asarray(self.k, dtype=float)
        k = k * np.eye(D) if k.ndim == 0 else (np.diag(k) if k.ndim == 1 else k.reshape(D, D))
        if not np.allclose(k, k.T, rtol=0, atol=1e-12):
            raise ValueError("force-constant matrix must be symmetric")
        object.__setattr__(self, "q_eq", q_eq)
        object.__setattr__(self, "k", 0.5 * (k + k.T))
        object.__setattr__(self, "V_eq", float(self.V_eq))

    @property
    def dim(self) -> int:
        return self.q_eq.size

    def value(self, q) -> float:
        x = np.asarray(q, dtype=float) - self.q_eq
        return float(self.V_eq + 0.5 * x @ self.k @ x)

    def on_grid(self, points) -> np.ndarray:
        x = np.asarray(points, dtype=float) - self.q_eq
        return self.V_eq + 0.5 * np.einsum("...i,ij,...j->...", x, self.k, x)

    def derivative(self, q, order: int) -> np.ndarray:
        self._check_order(order, lo=1)
        if order == 1:
            return self.k @ (np.asarray(q, dtype=float) - self.q_eq)
        if order == 2:
            return self.k.copy()
        return np.zeros((self.dim,) * order)

    def expectation(self, q, sigma, order: int) -> np.ndarray:
        self._check_order(order)
        if order == 0:
            return self.value(q) + 0.5 * float(np.trace(self.k @ sigma))
        return self.derivative(q, order)

    def third_contract(self, q, sigma) -> np.ndarray:
        return np.zeros(self.dim)

    def tensors_mp(self, q, sigma, orders, average: bool = False) -> dict:
        import mpmath as mp

        D = self.dim
        out = {}
        for n in orders:
            if n == 2:
                T = np.array([[mp.mpf(float(v)) for v in row] for row in self.k], dtype=object)
            elif n > 2:
                T = np.full((D,) * n, mp.mpf(0), dtype=object)
            else:
                raise ValueError("tensors_mp supports orders >= 2")
            out[n] = T
        return out

    def fourth_contract(self, q, sigma) -> np.ndarray:
        return np.zeros((self.dim, self.dim))


class CountingPotential(PotentialModel):
    """Wraps a potential and counts local (derivative) and averaged evaluations.

    One call that produces the coefficients of a potential step counts as one
    evaluation, whatever the number of tensors it returns.
    """

    def __init__(self, inner: PotentialModel):
        self.inner = inner
        self.evaluations = 0

    @property
    def dim(self) -> int:
        return self.inner.dim

    def __getattr__(self, name):
        return getattr(self.inner, name)

    def count(self) -> None:
        self.evaluations += 1

    def value(self, q):
        return self.inner.value(q)

    def derivative(self, q, order):
        return self.inner.derivative(q, order)

    def expectation(self, q, sigma, order):
        return self.inner.expectation(q, sigma, order)

    def third_contract(self, q, sigma):
        return self.inner.third_contract(q, sigma)

    def fourth_contract(self, q, sigma):
        return self.inner.fourth_contract(q, sigma)


def morse_value(pot: CoupledMorse, q) -> float:
    return pot.value(q)


def morse_derivatives(pot: CoupledMorse, q, order: int) -> np.ndarray:
    return pot.derivative(q, order)


def morse_expectations(pot: CoupledMorse, state: GaussianState, order: int):
    """Average of the rank-``order`` derivative tensor over ``|psi|^2``."""
    return pot.expectation(state.q, position_covariance(state), order)


def harmonic_ground_state(pot: HarmonicPotential, mass=None, hbar: float = 1.0) -> tuple[GaussianState, float]:
    """Ground state of ``pot`` and its zero-point energy ``(hbar/2) sum omega_j``."""
    from .states import HellerParams, from_heller

    D = pot.dim
    m = as_mass_matrix(mass, D)
    wm, Um = np.linalg.eigh(m)
    m_half = (Um * np.sqrt(wm)) @ Um.T
    m_mhalf = (Um / np.sqrt(wm)) @ Um.T
    kw = m_mhalf @ pot.k @ m_mhalf
    w2, U = np.linalg.eigh(0.5 * (kw + kw.T))
    if w2.min() <= 0:
        raise ValueError("force-constant matrix must be positive definite")
    omega = np.sqrt(w2)
    root = (U * omega) @ U.T
    A = 1j * (m_half @ root @ m_half)
    h = HellerParams(pot.q_eq, np.zeros(D), A, 0.0, hbar, m)
    return from_heller(h), 0.5 * hbar * float(omega.sum())
