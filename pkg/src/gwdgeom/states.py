"""Gaussian wavepacket parametrizations.

Two equivalent descriptions of a normalized thawed Gaussian are kept here:

* :class:`HellerParams` -- ``exp[i/hbar (x^T A x / 2 + p^T x + gamma)]`` with
  ``x = q - q_t``; used for norms, overlaps and grid sampling.
* :class:`GaussianState` -- Hagedorn's ``(q, p, Q, P, S)`` with ``A = P Q^{-1}``;
  this is the propagated object.  The prefactor ``(det Q)^{-1/2}`` needs a
  branch of ``arg det Q``; it is carried along the trajectory in
  ``GaussianState.det_arg`` and updated continuously by the integrators.

Gauge used by :func:`from_heller`: ``Q = (Im A)^{-1/2}`` (real, symmetric,
positive definite) and ``P = A Q``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

HERMITIAN_TOL = 1e-12


class DegenerateStateError(ValueError):
    """Raised when Q is singular and the width matrix is undefined."""


class InvalidWidthError(ValueError):
    """Raised when Im A is not positive definite or A is not symmetric."""


def as_mass_matrix(mass, dim: int) -> np.ndarray:
    """Return ``mass`` as a ``dim x dim`` float array (scalar -> multiple of I)."""
    if mass is None:
        return np.eye(dim)
    m = np.asarray(mass, dtype=float)
    if m.ndim == 0:
        return float(m) * np.eye(dim)
    if m.ndim == 1:
        return np.diag(m)
    if m.shape != (dim, dim):
        raise ValueError(f"mass matrix has shape {m.shape}, expected {(dim, dim)}")
    return m


def _check_mass(m: np.ndarray) -> None:
    if not np.allclose(m, m.T, atol=HERMITIAN_TOL, rtol=0):
        raise ValueError("mass matrix must be symmetric")
    if np.linalg.eigvalsh(m).min() <= 0:
        raise ValueError("mass matrix must be positive definite")


@dataclass(frozen=True, eq=False)
class HellerParams:
    """Heller form of a Gaussian: position, momentum, width and phase."""

    q: np.ndarray
    p: np.ndarray
    A: np.ndarray
    gamma: complex
    hbar: float = 1.0
    mass: np.ndarray | None = None

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        dim = q.size
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", np.atleast_1d(np.asarray(self.p, dtype=float)))
        object.__setattr__(self, "A", np.asarray(self.A, dtype=complex).reshape(dim, dim))
        object.__setattr__(self, "gamma", complex(self.gamma))
        object.__setattr__(self, "mass", as_mass_matrix(self.mass, dim))

    @property
    def dim(self) -> int:
        return self.q.size

    def validate(self) -> None:
        """Raise :class:`InvalidWidthError` unless the type invariants hold."""
        if self.p.shape != self.q.shape:
            raise ValueError("q and p must have the same length")
        if np.max(np.abs(self.A - self.A.T)) > HERMITIAN_TOL * max(1.0, np.max(np.abs(self.A))):
            raise InvalidWidthError("width matrix A is not symmetric")
        if np.linalg.eigvalsh(_sym(self.A.imag)).min() <= 0:
            raise InvalidWidthError("Im A is not positive definite")
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        _check_mass(self.mass)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the wavefunction at points ``x`` with shape ``(..., D)``."""
        x = np.asarray(x, dtype=float) - self.q
        quad = 0.5 * np.einsum("...i,ij,...j->...", x, self.A, x)
        return np.exp(1j / self.hbar * (quad + x @ self.p + self.gamma))


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Hagedorn-parametrized Gaussian wavepacket.

    ``det_arg`` is the continuous branch of ``arg det Q`` selected along the
    trajectory; it fixes the sign of ``(det Q)^{-1/2}``.
    """

    q: np.ndarray
    p: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    S: float = 0.0
    hbar: float = 1.0
    mass: np.ndarray | None = None
    det_arg: float = 0.0
    minv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        dim = q.size
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", np.atleast_1d(np.asarray(self.p, dtype=float)))
        object.__setattr__(self, "Q", np.asarray(self.Q, dtype=complex).reshape(dim, dim))
        object.__setattr__(self, "P", np.asarray(self.P, dtype=complex).reshape(dim, dim))
        object.__setattr__(self, "S", float(self.S))
        object.__setattr__(self, "det_arg", float(self.det_arg))
        m = as_mass_matrix(self.mass, dim)
        object.__setattr__(self, "mass", m)
        object.__setattr__(self, "minv", np.linalg.inv(m))

    @property
    def dim(self) -> int:
        return self.q.size

    def evolve(self, **changes) -> "GaussianState":
        """Copy with some fields replaced (mass inverse is recomputed only if needed)."""
        new = replace(self, **changes) if "mass" in changes else _fast_replace(self, changes)
        return new

    def relation_defects(self) -> tuple[float, float]:
        """Max-norm residuals of ``Q^T P - P^T Q = 0`` and ``Q^† P - P^† Q = 2i I``."""
        Q, P = self.Q, self.P
        r1 = Q.T @ P - P.T @ Q
        r2 = Q.conj().T @ P - P.conj().T @ Q - 2j * np.eye(self.dim)
        return float(np.max(np.abs(r1))), float(np.max(np.abs(r2)))

    def validate(self, tol: float = 1e-10) -> None:
        r1, r2 = self.relation_defects()
        if r1 > tol or r2 > tol:
            raise InvalidWidthError(f"Hagedorn relations violated ({r1:.2e}, {r2:.2e})")
        if not np.isfinite(np.linalg.cond(self.Q)):
            raise DegenerateStateError("Q is singular")


def _fast_replace(state: GaussianState, changes: dict) -> GaussianState:
    # skips __post_init__ (inputs produced by integrators already have the right dtypes)
    new = object.__new__(GaussianState)
    d = new.__dict__
    d.update(state.__dict__)
    d.update(changes)
    return new


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def width(state: GaussianState) -> np.ndarray:
    """Width matrix ``A = P Q^{-1}``, symmetrized."""
    try:
        # A^T = Q^{-T} P^T, so solve Q^T A^T = P^T
        At = np.linalg.solve(state.Q.T, state.P.T)
    except np.linalg.LinAlgError as exc:
        raise DegenerateStateError("Q is singular") from exc
    return _sym(At.T)


def log_det_Q(state: GaussianState) -> complex:
    """``ln det Q`` on the branch tracked by ``det_arg``."""
    sign, logabs = np.linalg.slogdet(state.Q)
    if sign == 0:
        raise DegenerateStateError("Q is singular")
    return complex(logabs, state.det_arg)


def to_heller(state: GaussianState) -> HellerParams:
    """Convert to Heller form; ``gamma = S + i hbar [D ln(pi hbar)/4 + ln det Q / 2]``."""
    A = width(state)
    hbar = state.hbar
    gamma = state.S + 1j * hbar * (0.25 * state.dim * np.log(np.pi * hbar) + 0.5 * log_det_Q(state))
    return HellerParams(state.q, state.p, A, gamma, hbar, state.mass)


def from_heller(h: HellerParams) -> GaussianState:
    """Hagedorn state with the same ``(q, p, A)`` and real phase.

    The Hagedorn form is always normalized, so ``Im gamma`` is not used.
    ``Re gamma`` becomes ``S`` because ``Q`` is real positive definite.
    """
    B = _sym(h.A.imag)
    w, U = np.linalg.eigh(B)
    if w.min() <= 0:
        raise InvalidWidthError("Im A is not positive definite")
    Q = (U / np.sqrt(w)) @ U.T
    P = h.A @ Q
    return GaussianState(h.q, h.p, Q, P, h.gamma.real, h.hbar, h.mass, det_arg=0.0)


def norm(h: HellerParams) -> float:
    """``exp(-Im gamma / hbar) det(pi hbar / Im A)^{1/4}``."""
    _, logdet = np.linalg.slogdet(_sym(h.A.imag))
    return float(np.exp(-h.gamma.imag / h.hbar + 0.25 * (h.dim * np.log(np.pi * h.hbar) - logdet)))


def state_norm(state: GaussianState) -> float:
    """Norm of a Hagedorn state, evaluated through its Heller form."""
    return norm(to_heller(state))


def position_covariance(state: GaussianState) -> np.ndarray:
    """``Sigma = (hbar/2) Re(Q Q^†)``."""
    QQ = state.Q @ state.Q.conj().T
    return 0.5 * state.hbar * _sym(QQ.real)


def position_covariance_heller(h: HellerParams) -> np.ndarray:
    """``Sigma = (hbar/2) (Im A)^{-1}``."""
    return 0.5 * h.hbar * _sym(np.linalg.inv(_sym(h.A.imag)))


def momentum_covariance(h: HellerParams) -> np.ndarray:
    """``Cov(p) = (hbar/2) A (Im A)^{-1} A^†``."""
    A = h.A
    C = A @ np.linalg.solve(_sym(A.imag), A.conj().T)
    return 0.5 * h.hbar * _sym(C.real)


def momentum_covariance_hagedorn(state: GaussianState) -> np.ndarray:
    """``Cov(p) = (hbar/2) Re(P P^†)``."""
    PP = state.P @ state.P.conj().T
    return 0.5 * state.hbar * _sym(PP.real)


def _check_pair(a: HellerParams, b: HellerParams) -> None:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if a.hbar != b.hbar:
        raise ValueError("states use different hbar")


def _log1p_complex(z: np.ndarray) -> np.ndarray:
    # accurate log(1 + z) for small complex z
    z = np.asarray(z, dtype=complex)
    re = 0.5 * np.log1p(2 * z.real + np.abs(z) ** 2)
    return re + 1j * np.arctan2(z.imag, 1.0 + z.real)


def log_overlap_excess(a: HellerParams, b: HellerParams) -> complex:
    """``ln <a|b> - (ln<a|a> + ln<b|b>)/2``.

    The expression is arranged in differences of the two parameter sets so
    that it is accurate when the states nearly coincide; its real part is
    never positive.
    """
    _check_pair(a, b)
    hbar = a.hbar
    Ba, Bb = _sym(a.A.imag), _sym(b.A.imag)
    Bm = 0.5 * (Ba + Bb)
    dB = Bb - Ba
    dR = _sym(b.A.real - a.A.real)
    L = np.linalg.cholesky(Bm)
    Linv = np.linalg.inv(L)
    mu = np.linalg.eigvalsh(_sym(Linv @ dR @ Linv.T))
    xi = np.linalg.eigvalsh(_sym(Linv @ dB @ Linv.T))
    logdet = -0.5 * np.sum(_log1p_complex(-0.5j * mu)) + 0.25 * np.sum(np.log1p(-0.25 * xi**2))

    delta = b.q - a.q
    pm = 0.5 * (a.p + b.p)
    # M = (Ab - conj(Aa)) / (i hbar) = (2 Bm - i dR) / hbar
    M = (2.0 * Bm - 1j * dR) / hbar
    v = 1j / hbar * ((b.p - a.p) - 0.5 * (b.A + a.A.conj()) @ delta)
    quad = 0.5 * v @ np.linalg.solve(M, v)
    dgamma = b.gamma.real - a.gamma.real
    lin = 1j / hbar * (0.125 * delta @ (b.A - a.A.conj()) @ delta - pm @ delta + dgamma)
    return complex(logdet + quad + lin)


def overlap(a: HellerParams, b: HellerParams) -> complex:
    """``<a|b>``, the integral of ``conj(a) b`` over all of configuration space."""
    return norm(a) * norm(b) * np.exp(log_overlap_excess(a, b))


def state_distance(a: HellerParams, b: HellerParams) -> float:
    """``|| a - b ||`` in L2, evaluated without cancellation for nearby states."""
    na, nb = norm(a), norm(b)
    lam = log_overlap_excess(a, b)
    # Re(exp(lam) - 1) without cancellation
    re_expm1 = np.expm1(lam.real) * np.cos(lam.imag) - 2.0 * np.sin(0.5 * lam.imag) ** 2
    d2 = (na - nb) ** 2 - 2.0 * na * nb * re_expm1
    return float(np.sqrt(max(d2, 0.0)))


def distance(a: GaussianState, b: GaussianState) -> float:
    """:func:`state_distance` for two Hagedorn states."""
    return state_distance(to_heller(a), to_heller(b))


def to_record(state: GaussianState) -> str:
    """One-line text record: D, q, p, Re/Im Q, Re/Im P (column-major), S, det_arg."""
    parts = [str(state.dim)]
    vals = np.concatenate(
        [
            state.q,
            state.p,
            state.Q.real.ravel(order="F"),
            state.Q.imag.ravel(order="F"),
            state.P.real.ravel(order="F"),
            state.P.imag.ravel(order="F"),
            [state.S, state.det_arg],
        ]
    )
    parts.extend(f"{v:.17g}" for v in vals)
    return " ".join(parts)


def from_record(line: str, hbar: float = 1.0, mass=None) -> GaussianState:
    """Inverse of :func:`to_record`."""
    tokens = line.split()
    dim = int(tokens[0])
    v = np.array([float(t) for t in tokens[1:]])
    n2 = dim * dim
    expected = 2 * dim + 4 * n2 + 2
    if v.size != expected:
        raise ValueError(f"record has {v.size} values, expected {expected}")
    q, p = v[:dim], v[dim : 2 * dim]
    off = 2 * dim
    blocks = [v[off + k * n2 : off + (k + 1) * n2].reshape(dim, dim, order="F") for k in range(4)]
    Q = blocks[0] + 1j * blocks[1]
    P = blocks[2] + 1j * blocks[3]
    return GaussianState(q, p, Q, P, v[-2], hbar, mass, det_arg=v[-1])
