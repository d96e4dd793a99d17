"""Autocorrelation functions and their Fourier-transform spectra."""
import warnings

import numpy as np
import pytest

from gwdgeom.integrators import StepPlan, default_scheme, propagate
from gwdgeom.potentials import HarmonicPotential
from gwdgeom.qm import grid_autocorrelation_series, grid_sample_gaussian
from gwdgeom.spectra import (
    Autocorrelation,
    Spectrum,
    autocorrelation_observer,
    damp,
    find_peaks,
    frequency_grid,
    gwd_autocorrelation,
    morse_levels,
    read_autocorrelation_csv,
    spectral_distance,
    spectrum,
    write_autocorrelation_csv,
    write_spectrum_csv,
)
from gwdgeom.states import HellerParams, from_heller, to_heller


def gaussian_line(omega, omega0, hwhm_t):
    """Re int_0^inf exp(i (omega - omega0) t) exp(-ln2 t^2 / tau^2) dt."""
    alpha = np.log(2.0) / hwhm_t**2
    return 0.5 * np.sqrt(np.pi / alpha) * np.exp(-((omega - omega0) ** 2) / (4 * alpha))


def line_autocorrelation(omega0, dt=0.05, n=4000, e1g=0.0):
    t = dt * np.arange(n)
    return Autocorrelation(t, np.exp(-1j * (omega0 + e1g) * t), e1g=e1g)


def coherent_autocorrelation(q0, p0, t):
    a2 = 0.5 * (q0**2 + p0**2)
    return np.exp(-a2 * (1 - np.exp(-1j * t)) - 0.5j * t)


# --- containers -----------------------------------------------------------------------


def test_autocorrelation_requires_uniform_grid():
    with pytest.raises(ValueError, match="uniform"):
        Autocorrelation([0.0, 0.1, 0.25], [1, 1, 1])
    with pytest.raises(ValueError):
        Autocorrelation([0.0, 0.1], [1, 1, 1])


def test_damping_window_halves_at_hwhm():
    ac = damp(Autocorrelation(np.linspace(0, 20, 201), np.ones(201)), 10.0)
    assert ac.values[100] == pytest.approx(0.5, rel=1e-14)
    assert ac.damping_hwhm == 10.0
    with pytest.raises(ValueError):
        damp(ac, 0.0)


# --- transforms --------------------------------------------------------------------------


@pytest.mark.parametrize("e1g", [0.0, 0.45])
def test_single_line_matches_closed_form(e1g):
    ac = damp(line_autocorrelation(2.0, e1g=e1g), 10.0)
    spec = spectrum(ac, window=(0.0, 4.0))
    np.testing.assert_allclose(spec.intensities, gaussian_line(spec.frequencies, 2.0, 10.0), atol=1e-10)
    assert spec.damping_hwhm == 10.0


def test_fft_grid_matches_direct_summation():
    ac = damp(line_autocorrelation(1.3, e1g=0.2), 8.0)
    fast = spectrum(ac, window=(0.0, 3.0))
    direct = spectrum(ac, omega_grid=fast.frequencies)
    np.testing.assert_allclose(fast.intensities, direct.intensities, atol=1e-11)


def test_frequency_grid_spacing_and_window():
    ac = line_autocorrelation(1.0, dt=0.1, n=1000, e1g=0.3)
    w = frequency_grid(ac, (1.0, 2.0))
    np.testing.assert_allclose(np.diff(w), 2 * np.pi / 100.0)
    assert w[0] >= 1.0 and w[-1] <= 2.0
    # every grid point is an exact DFT frequency after the zero-point shift
    k = (w + 0.3) / (2 * np.pi / 100.0)
    np.testing.assert_allclose(k, np.round(k), atol=1e-9)


def test_spectrum_is_linear():
    a = damp(line_autocorrelation(1.0), 10.0)
    b = damp(line_autocorrelation(2.5), 10.0)
    both = Autocorrelation(a.times, 2.0 * a.values - 0.5 * b.values)
    sa, sb, sab = (spectrum(x, window=(0, 4)) for x in (a, b, both))
    np.testing.assert_allclose(sab.intensities, 2.0 * sa.intensities - 0.5 * sb.intensities, atol=1e-12)


def test_harmonic_poisson_progression():
    # displaced harmonic oscillator: lines at omega = n with weights exp(-a2) a2^n / n!
    q0, tau = 1.2, 30.0
    t = 0.05 * np.arange(12000)
    ac = damp(Autocorrelation(t, coherent_autocorrelation(q0, 0.0, t), e1g=0.5), tau)
    spec = spectrum(ac, omega_grid=np.arange(5.0))
    a2 = 0.5 * q0**2
    weights = np.exp(-a2) * a2 ** np.arange(5) / np.array([1, 1, 2, 6, 24])
    np.testing.assert_allclose(spec.intensities, weights * gaussian_line(0.0, 0.0, tau), rtol=1e-9)


def test_warning_when_not_decayed():
    with pytest.warns(RuntimeWarning, match="not decayed"):
        spectrum(line_autocorrelation(1.0, n=100))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        spectrum(damp(line_autocorrelation(1.0), 10.0))


def test_find_peaks_and_distance():
    t = 0.05 * np.arange(4000)
    ac = damp(Autocorrelation(t, np.exp(-1j * t) + 0.3 * np.exp(-3j * t)), 10.0)
    spec = spectrum(ac, window=(0, 4))
    peaks = find_peaks(spec)
    assert len(peaks) == 2
    np.testing.assert_allclose(peaks, [1.0, 3.0], atol=spec.spacing)
    assert spectral_distance(spec, spec) == 0.0
    scaled = Spectrum(spec.frequencies, 2 * spec.intensities)
    assert spectral_distance(spec, scaled) == pytest.approx(np.sqrt(np.sum(spec.intensities**2) * spec.spacing))
    with pytest.raises(ValueError):
        spectral_distance(spec, Spectrum(spec.frequencies[:-1], spec.intensities[:-1]))


# --- Morse levels ----------------------------------------------------------------------


def dvr_levels(de, a, mass=1.0, lo=-10.0, hi=40.0, n=800):
    """Lowest eigenvalues of de (1 - exp(-a x))^2 in a sinc discrete-variable representation."""
    x = np.linspace(lo, hi, n)
    dx = x[1] - x[0]
    i = np.arange(n)
    diff = i[:, None] - i[None, :]
    with np.errstate(divide="ignore"):
        T = np.where(diff == 0, np.pi**2 / 3, 2.0 / diff.astype(float) ** 2) * (-1.0) ** diff
    H = T / (2 * mass * dx**2) + np.diag(de * (1 - np.exp(-a * x)) ** 2)
    return np.linalg.eigvalsh(H)


def test_morse_levels_match_dvr_diagonalization():
    de, a = 22.5, 0.01 * np.sqrt(8 * 22.5)
    levels = morse_levels(de, a)
    np.testing.assert_allclose(levels[:6], dvr_levels(de, a)[:6], atol=1e-8)


def test_morse_levels_closed_form_and_count():
    levels = morse_levels(22.5, 0.01 * np.sqrt(180.0))
    w = 0.9
    np.testing.assert_allclose(levels[:3], [w * (n + 0.5) - (w * (n + 0.5)) ** 2 / 90 for n in range(3)])
    assert levels[-1] < 22.5
    assert np.all(np.diff(levels) > 0)
    assert len(levels) == int(2 * 22.5 / w - 0.5) + 1


# --- Gaussian and grid autocorrelations -------------------------------------------------


def test_gwd_autocorrelation_matches_closed_form_and_grid():
    pot = HarmonicPotential([0.0], [1.0])
    s0 = from_heller(HellerParams([1.0], [0.4], [[1j]], 0.0))
    rec = propagate(s0, StepPlan("lca", scheme=default_scheme(8), dt=0.05), pot, 40,
                    {"C": autocorrelation_observer(s0)}, keep_states=True)
    ac = gwd_autocorrelation(rec, s0, e1g=0.5)
    np.testing.assert_allclose(ac.values, coherent_autocorrelation(1.0, 0.4, ac.times), atol=1e-10)
    np.testing.assert_allclose(ac.values, rec.series("C"), atol=1e-15)
    assert ac.e1g == 0.5

    psi0 = grid_sample_gaussian(to_heller(s0), [(-12.0, 12.0, 256)])
    t, c, _ = grid_autocorrelation_series(psi0, pot, dt=0.001, n_steps=2000, stride=50)
    np.testing.assert_allclose(t, ac.times, atol=1e-12)
    np.testing.assert_allclose(c, ac.values, atol=1e-6)


def test_gwd_autocorrelation_argument_checks(morse1d):
    _, s0 = morse1d
    with pytest.raises(ValueError, match="times"):
        gwd_autocorrelation([s0, s0], s0)
    ac = gwd_autocorrelation([s0, s0], s0, times=[0.0, 0.1])
    assert ac.values[0] == pytest.approx(1.0)
    with pytest.raises(ValueError, match="dimension"):
        gwd_autocorrelation([s0], from_heller(HellerParams([0.0, 0.0], [0.0, 0.0], np.eye(2) * 1j, 0.0)),
                            times=[0.0])


# --- files ---------------------------------------------------------------------------------


def test_csv_round_trip_is_exact(tmp_path, rng):
    t = 0.01 * np.arange(50)
    ac = Autocorrelation(t, rng.normal(size=50) + 1j * rng.normal(size=50), e1g=0.45)
    write_autocorrelation_csv(tmp_path / "c.csv", ac)
    back = read_autocorrelation_csv(tmp_path / "c.csv", e1g=0.45)
    np.testing.assert_array_equal(back.values, ac.values)
    np.testing.assert_array_equal(back.times, ac.times)
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "t,ReC,ImC"

    spec = Spectrum(np.linspace(0, 1, 5), rng.normal(size=5))
    write_spectrum_csv(tmp_path / "s.csv", spec)
    data = np.loadtxt(tmp_path / "s.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 1], spec.intensities)
