"""Gaussian parametrizations, norms, overlaps and distances.

Oracles are direct quadrature of the wavefunctions on grids, and a few
high-precision values computed independently with mpmath.
"""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_heller
from gwdgeom.states import (
    DegenerateStateError,
    GaussianState,
    HellerParams,
    InvalidWidthError,
    distance,
    from_heller,
    from_record,
    log_overlap_excess,
    momentum_covariance,
    momentum_covariance_hagedorn,
    norm,
    overlap,
    position_covariance,
    position_covariance_heller,
    state_distance,
    state_norm,
    to_heller,
    to_record,
    width,
)


def grid_1d(lo=-12.0, hi=12.0, n=4001):
    x = np.linspace(lo, hi, n)
    return x, x[1] - x[0]


def grid_2d(lo=-9.0, hi=9.0, n=401):
    x = np.linspace(lo, hi, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    return np.stack([X, Y], axis=-1), (x[1] - x[0]) ** 2


# --- parametrizations ---------------------------------------------------------


@pytest.mark.parametrize("D", [1, 2, 5])
def test_heller_round_trip(rng, D):
    h = random_heller(rng, D)
    s = from_heller(h)
    h2 = to_heller(s)
    np.testing.assert_allclose(h2.A, h.A, atol=1e-12)
    np.testing.assert_allclose(h2.q, h.q)
    np.testing.assert_allclose(h2.p, h.p)
    # the Hagedorn form is normalized; the real phase carries over only up to the Q-phase term
    assert state_norm(s) == pytest.approx(1.0, abs=1e-13)
    assert h2.gamma.real == pytest.approx(h.gamma.real, abs=1e-13)


@pytest.mark.parametrize("D", [1, 3, 6])
def test_hagedorn_relations(rng, D):
    s = from_heller(random_heller(rng, D))
    symp, herm = s.relation_defects()
    assert symp < 1e-12 and herm < 1e-12
    np.testing.assert_allclose(s.Q.T @ s.P - s.P.T @ s.Q, 0, atol=1e-12)
    np.testing.assert_allclose(s.Q.conj().T @ s.P - s.P.conj().T @ s.Q, 2j * np.eye(D), atol=1e-12)


def test_width_is_P_Qinv(rng):
    s = from_heller(random_heller(rng, 3))
    np.testing.assert_allclose(width(s), s.P @ np.linalg.inv(s.Q), atol=1e-12)


def test_invalid_width_rejected():
    with pytest.raises(InvalidWidthError):
        HellerParams([0.0], [0.0], [[1.0 - 0.5j]], 0.0).validate()
    with pytest.raises(InvalidWidthError):
        from_heller(HellerParams([0.0, 0.0], [0.0, 0.0], np.diag([1j, -1j]), 0.0))


def test_validate_detects_broken_relations():
    s = GaussianState([0.0], [0.0], [[1.0]], [[2j]])
    with pytest.raises(InvalidWidthError):
        s.validate()


def test_singular_Q_is_degenerate():
    with pytest.raises((DegenerateStateError, InvalidWidthError)):
        GaussianState([0.0, 0.0], [0.0, 0.0], np.zeros((2, 2)), np.eye(2) * 1j).validate()


def test_record_round_trip_is_exact(rng):
    s = from_heller(random_heller(rng, 3)).evolve(S=0.123456789012345678, det_arg=-2.5)
    back = from_record(to_record(s))
    for name in ("q", "p", "Q", "P"):
        np.testing.assert_array_equal(getattr(back, name), getattr(s, name))
    assert back.S == s.S and back.det_arg == s.det_arg


# --- norms and moments against grid quadrature -------------------------------


def test_norm_1d_against_quadrature(rng):
    h = random_heller(rng, 1, spread=0.5)
    x, dx = grid_1d()
    psi = h(x[:, None])
    assert np.sqrt(np.sum(np.abs(psi) ** 2) * dx) == pytest.approx(norm(h), rel=1e-10)


def test_moments_2d_against_quadrature(rng):
    h = random_heller(rng, 2, spread=0.5)
    pts, cell = grid_2d()
    rho = np.abs(h(pts)) ** 2
    mass = rho.sum() * cell
    assert np.sqrt(mass) == pytest.approx(norm(h), rel=1e-9)
    mean = np.einsum("ij,ijk->k", rho, pts) * cell / mass
    np.testing.assert_allclose(mean, h.q, atol=1e-9)
    d = pts - h.q
    cov = np.einsum("ij,ijk,ijl->kl", rho, d, d) * cell / mass
    np.testing.assert_allclose(cov, position_covariance_heller(h), atol=1e-9)
    np.testing.assert_allclose(position_covariance(from_heller(h)), cov, atol=1e-9)


def test_momentum_covariance_1d_against_quadrature(rng):
    h = random_heller(rng, 1, spread=0.3)
    x, dx = grid_1d(n=4096)
    # momentum distribution from the discrete Fourier transform (hbar = 1)
    weights = np.abs(np.fft.fft(h(x[:, None]))) ** 2
    k = 2 * np.pi * np.fft.fftfreq(x.size, dx)
    mean = np.sum(k * weights) / weights.sum()
    var = np.sum((k - mean) ** 2 * weights) / weights.sum()
    assert mean == pytest.approx(h.p[0], abs=1e-10)
    assert var == pytest.approx(momentum_covariance(h)[0, 0], rel=1e-10)
    assert momentum_covariance_hagedorn(from_heller(h))[0, 0] == pytest.approx(var, rel=1e-10)


# --- overlaps and distances --------------------------------------------------


def test_overlap_mpmath_oracle():
    # values of int conj(a) b dx computed independently with mpmath quadrature
    a = HellerParams([0.2], [-0.7], [[0.3 + 1.1j]], 0.4 + 0.05j)
    b = HellerParams([-0.5], [0.9], [[-0.6 + 0.8j]], -1.2 + 0.2j)
    ov = overlap(a, b)
    assert ov.real == pytest.approx(0.044769016384076062836, abs=1e-13)
    assert ov.imag == pytest.approx(-0.76588540327634127231, abs=1e-13)


@pytest.mark.parametrize("seed", range(4))
def test_overlap_2d_against_quadrature(seed):
    rng = np.random.default_rng(seed)
    a, b = random_heller(rng, 2, 0.5), random_heller(rng, 2, 0.5)
    pts, cell = grid_2d()
    ov = np.sum(np.conj(a(pts)) * b(pts)) * cell
    assert abs(overlap(a, b) - ov) <= 1e-9 * max(1.0, abs(ov))


def test_self_overlap_is_norm_squared(rng):
    h = random_heller(rng, 4)
    assert overlap(h, h) == pytest.approx(norm(h) ** 2, rel=1e-13)
    assert abs(log_overlap_excess(h, h)) < 1e-14


def test_distance_against_quadrature(rng):
    a = random_heller(rng, 1, 0.3)
    b = HellerParams(a.q + 0.1, a.p - 0.2, a.A + 0.05, a.gamma + 0.01, a.hbar)
    x, dx = grid_1d()
    d = np.sqrt(np.sum(np.abs(a(x[:, None]) - b(x[:, None])) ** 2) * dx)
    assert state_distance(a, b) == pytest.approx(d, rel=1e-8)


@pytest.mark.parametrize("eps", [1e-6, 1e-9, 1e-12])
def test_distance_resolves_tiny_differences(eps):
    # for a pure position shift, ||a - b|| = eps ||d psi/dq|| to first order;
    # for psi = N exp(-x^2/2) (A = i) the derivative norm is 1/sqrt(2)
    a = HellerParams([0.0], [0.0], [[1j]], 0.0)
    a = to_heller(from_heller(a))
    b = HellerParams(a.q + eps, a.p, a.A, a.gamma)
    assert state_distance(a, b) == pytest.approx(eps / np.sqrt(2.0), rel=1e-4)


def test_distance_between_hagedorn_states_is_symmetric(rng):
    s1, s2 = from_heller(random_heller(rng, 3)), from_heller(random_heller(rng, 3))
    assert distance(s1, s2) == pytest.approx(distance(s2, s1), rel=1e-12)
    assert distance(s1, s1) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=1, max_value=4), st.integers(min_value=0, max_value=2**31))
def test_overlap_cauchy_schwarz(D, seed):
    rng = np.random.default_rng(seed)
    a, b = random_heller(rng, D), random_heller(rng, D)
    assert abs(overlap(a, b)) <= norm(a) * norm(b) * (1 + 1e-12)
    assert log_overlap_excess(a, b).real <= 1e-13
    # Hermitian symmetry of the inner product
    assert overlap(b, a) == pytest.approx(np.conj(overlap(a, b)), rel=1e-11, abs=1e-300)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**31))
def test_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_heller(rng, 2, 0.4) for _ in range(3))
    assert state_distance(a, c) <= state_distance(a, b) + state_distance(b, c) + 1e-12
