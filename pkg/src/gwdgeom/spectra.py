"""Autocorrelation functions and absorption spectra.

The spectrum of an autocorrelation function ``C(t)`` is

    sigma(omega) = Re int_0^inf C(t) exp[i (omega + E_1g / hbar) t] dt,

where ``E_1g`` is the zero-point energy of the initial state on the lower
surface.  The half-line integral is approximated with the trapezoid rule on
the uniform sampling grid of ``C``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .states import GaussianState, HellerParams, overlap, to_heller

DECAY_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Autocorrelation:
    times: np.ndarray
    values: np.ndarray
    e1g: float = 0.0
    hbar: float = 1.0
    damping_hwhm: float | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if t.ndim != 1 or t.shape != v.shape:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if t.size >= 2:
            dt = np.diff(t)
            if np.any(dt <= 0) or np.ptp(dt) > 1e-9 * abs(dt[0]):
                raise ValueError("autocorrelation must be sampled on a uniform increasing time grid")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


@dataclass(frozen=True, eq=False)
class Spectrum:
    frequencies: np.ndarray
    intensities: np.ndarray
    damping_hwhm: float | None = None

    @property
    def spacing(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0])


def damp(ac: Autocorrelation, hwhm: float) -> Autocorrelation:
    """Multiply by the Gaussian window ``exp(-ln 2 (t / hwhm)^2)``."""
    if not hwhm > 0:
        raise ValueError("damping half-width must be positive")
    window = np.exp(-np.log(2.0) * (ac.times / hwhm) ** 2)
    return replace(ac, values=ac.values * window, damping_hwhm=float(hwhm))


def _trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def frequency_grid(ac: Autocorrelation, window: tuple[float, float] | None = None) -> np.ndarray:
    """Points ``2 pi k / (N dt) - E_1g / hbar`` lying in ``window``.

    On this grid the quadrature reduces to a single discrete Fourier transform.
    """
    n = ac.times.size
    step = 2.0 * np.pi / (n * ac.dt)
    shift = ac.e1g / ac.hbar
    lo, hi = window if window is not None else (-shift, -shift + step * (n - 1))
    k = np.arange(np.ceil((lo + shift) / step), np.floor((hi + shift) / step) + 1)
    return k * step - shift


def spectrum(ac: Autocorrelation, omega_grid=None, window: tuple[float, float] | None = None) -> Spectrum:
    """Trapezoid-rule absorption spectrum.

    With ``omega_grid=None`` the frequencies of :func:`frequency_grid` within
    ``window`` are used and evaluated by FFT; an explicit grid is evaluated by
    direct summation.  Warns when ``|C(t_f)|`` has not decayed below 1e-6.
    """
    if abs(ac.values[-1]) >= DECAY_TOL:
        warnings.warn(
            f"autocorrelation has not decayed (|C(t_f)| = {abs(ac.values[-1]):.2e}); spectrum will ring",
            RuntimeWarning,
            stacklevel=2,
        )
    n = ac.times.size
    wc = _trapezoid_weights(n) * ac.values * ac.dt
    shift = ac.e1g / ac.hbar
    t0 = ac.times[0]
    if omega_grid is None:
        omega = frequency_grid(ac, window)
        step = 2.0 * np.pi / (n * ac.dt)
        k = np.rint((omega + shift) / step).astype(int)
        full = n * np.fft.ifft(wc)  # sum_m wc_m exp(+2 pi i k m / n)
        vals = full[k % n] * np.exp(1j * (omega + shift) * t0)
    else:
        omega = np.asarray(omega_grid, dtype=float)
        vals = np.empty(omega.size, dtype=complex)
        for s in range(0, omega.size, 256):
            chunk = omega[s : s + 256]
            vals[s : s + 256] = np.exp(1j * np.outer(chunk + shift, ac.times)) @ wc
    return Spectrum(omega, vals.real.copy(), ac.damping_hwhm)


def autocorrelation_observer(psi0):
    """Observer for :func:`propagate` returning ``<psi0|psi_t>``."""
    ref = to_heller(psi0) if isinstance(psi0, GaussianState) else psi0
    return lambda s: overlap(ref, to_heller(s))


def gwd_autocorrelation(trajectory, psi0, times=None, e1g: float = 0.0) -> Autocorrelation:
    """``C(t) = <psi0|psi_t>`` from Gaussian states.

    ``trajectory`` is a :class:`~gwdgeom.integrators.TrajectoryRecord` with
    stored states or a sequence of :class:`GaussianState` / :class:`HellerParams`
    together with explicit ``times``.
    """
    if hasattr(trajectory, "states"):
        if not trajectory.states:
            raise ValueError("trajectory record holds no states; propagate with keep_states=True")
        states, times = trajectory.states, trajectory.times if times is None else times
    else:
        states = list(trajectory)
        if times is None:
            raise ValueError("times are required for a plain state sequence")
    ref = to_heller(psi0) if isinstance(psi0, GaussianState) else psi0
    dims = {s.dim for s in states} | {ref.dim}
    if len(dims) != 1:
        raise ValueError("all states must have the same dimension")
    values = [overlap(ref, s if isinstance(s, HellerParams) else to_heller(s)) for s in states]
    hbar = ref.hbar
    return Autocorrelation(np.asarray(times, dtype=float), np.array(values), e1g, hbar)


def spectral_distance(a: Spectrum, b: Spectrum) -> float:
    """L2 distance of two spectra sampled on the same uniform grid."""
    if a.frequencies.shape != b.frequencies.shape or np.max(np.abs(a.frequencies - b.frequencies)) > 1e-9:
        raise ValueError("spectra must share the frequency grid")
    return float(np.sqrt(np.sum((a.intensities - b.intensities) ** 2) * a.spacing))


def find_peaks(spec: Spectrum, rel_height: float = 0.01) -> np.ndarray:
    """Frequencies of strict local maxima higher than ``rel_height`` times the maximum."""
    y = spec.intensities
    inner = (y[1:-1] > y[:-2]) & (y[1:-1] > y[2:]) & (y[1:-1] > rel_height * y.max())
    return spec.frequencies[1:-1][inner]


def morse_levels(de: float, a: float, mass: float = 1.0, hbar: float = 1.0) -> np.ndarray:
    """Bound-state energies of ``de (1 - exp(-a x))^2`` above its minimum.

    ``E_n = hbar w (n + 1/2) - [hbar w (n + 1/2)]^2 / (4 de)`` with
    ``w = a sqrt(2 de / m)``, for all ``n`` below the dissociation limit.
    """
    w = a * np.sqrt(2.0 * de / mass)
    n_max = int(np.floor(2.0 * de / (hbar * w) - 0.5))
    x = hbar * w * (np.arange(n_max + 1) + 0.5)
    return x - x**2 / (4.0 * de)


def _write_rows(path, header: str, columns) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in zip(*columns):
            fh.write(",".join(f"{float(v):.17g}" for v in row) + "\n")


def write_spectrum_csv(path, spec: Spectrum) -> None:
    _write_rows(path, "omega,sigma", (spec.frequencies, spec.intensities))


def write_autocorrelation_csv(path, ac: Autocorrelation) -> None:
    _write_rows(path, "t,ReC,ImC", (ac.times, ac.values.real, ac.values.imag))


def read_autocorrelation_csv(path, e1g: float = 0.0, hbar: float = 1.0) -> Autocorrelation:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Autocorrelation(data[:, 0], data[:, 1] + 1j * data[:, 2], e1g, hbar)
