import itertools

import numpy as np
import pytest

from gwdgeom.potentials import CoupledMorse, HarmonicPotential
from gwdgeom.states import HellerParams, from_heller


def morse1d_system():
    pot = CoupledMorse([1.5], 10.0, 22.5, [0.01])
    s0 = from_heller(HellerParams([-0.5], [0.0], [[1j]], 0.0))
    return pot, s0


def morse2d_system():
    pot = CoupledMorse([1.0, 1.0], 10.0, 11.25, [0.02, 0.017], 5.75, [0.014, 0.017])
    s0 = from_heller(HellerParams([-0.75, 1.75], [0.0, 0.0], np.diag([1j, 1j]), 0.0))
    return pot, s0


def morse20d_system():
    chi = np.linspace(0.001, 0.005, 20)
    pot = CoupledMorse(np.full(20, 10.0), 0.0, 0.1, chi, 0.075, 0.75 * chi)
    A0 = np.diag(4 * 0.075 * 0.75 * chi * 1j)
    s0 = from_heller(HellerParams(np.zeros(20), np.zeros(20), A0, 0.0))
    return pot, s0


@pytest.fixture
def morse1d():
    return morse1d_system()


@pytest.fixture
def morse2d():
    return morse2d_system()


@pytest.fixture(scope="session")
def morse20d():
    return morse20d_system()


@pytest.fixture
def harmonic1d():
    return HarmonicPotential([0.0], [1.0])


def random_heller(rng, D, spread=1.0, hbar=1.0, mass=None):
    """A random valid Gaussian: complex symmetric width with positive-definite imaginary part."""
    X = rng.normal(size=(D, D))
    B = X @ X.T / D + 0.5 * np.eye(D)
    R = rng.normal(size=(D, D)) * 0.4
    A = 0.5 * (R + R.T) + 1j * B
    gamma = complex(rng.normal(), rng.normal() * 0.3)
    return HellerParams(rng.normal(size=D) * spread, rng.normal(size=D), A, gamma, hbar, mass)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# --- oracles shared by the unit and acceptance tests ------------------------------


def finite_difference(fn, q, h=1e-5):
    """Central difference of a tensor-valued function along each coordinate (new last axis)."""
    cols = []
    for j in range(q.size):
        e = np.zeros_like(q)
        e[j] = h
        cols.append((np.asarray(fn(q + e)) - np.asarray(fn(q - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def gauss_hermite_average(fn, q, sigma, n=40):
    """Tensor-product Gauss-Hermite average of ``fn`` over N(q, sigma)."""
    x, w = np.polynomial.hermite.hermgauss(n)
    L = np.linalg.cholesky(sigma)
    D = q.size
    total = 0.0
    for idx in itertools.product(range(n), repeat=D):
        xi = np.sqrt(2.0) * x[list(idx)]
        total = total + np.prod(w[list(idx)]) * np.asarray(fn(q + L @ xi))
    return total / np.pi ** (D / 2)


# --- acceptance report --------------------------------------------------------------

ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    """Record one pass/fail line for an acceptance criterion; printed in the summary."""
    line = f"acceptance criterion {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
