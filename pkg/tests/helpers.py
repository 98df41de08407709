"""Random model and measurement generators shared by the test modules."""

import numpy as np

from gaussfi import GaussianMeasurement, ParametricModel, random_symplectic, symplectic_form


def random_sym(n, rng, scale=1.0):
    A = rng.normal(scale=scale, size=(n, n))
    return 0.5 * (A + A.T)


def random_covariance(k, rng, mu_range=(1.0, 3.0), max_squeeze=1.0):
    """Valid covariance ``S diag(mu) S^T`` with random symplectic ``S``."""
    S = random_symplectic(k, rng, max_squeeze)
    mu = rng.uniform(*mu_range, size=k)
    return S @ np.diag(np.repeat(mu, 2)) @ S.T


def random_model(k, rng, mu_range=(1.05, 3.0), d_dot=True, sigma_dot=True):
    sigma = random_covariance(k, rng, mu_range)
    dd = rng.normal(size=2 * k) if d_dot else np.zeros(2 * k)
    sd = random_sym(2 * k, rng) if sigma_dot else np.zeros((2 * k, 2 * k))
    return ParametricModel.linear(rng.normal(size=2 * k), sigma, dd, sd)


def random_isothermal_model(rng, mu_range=(1.0, 4.0)):
    """Single-mode covariance-only model ``sigma = mu S S^T`` with random ``sigma_dot``."""
    S = random_symplectic(1, rng, 1.0)
    mu = rng.uniform(*mu_range)
    W = random_sym(2, rng)
    return ParametricModel.linear(np.zeros(2), mu * S @ S.T, np.zeros(2), S @ W @ S.T)


def random_pure_measurement(k, rng, max_squeeze=2.0):
    S = random_symplectic(k, rng, max_squeeze)
    return GaussianMeasurement(S @ S.T)


def random_measurement(k, rng):
    """Mixed or pure measurement covariance."""
    return GaussianMeasurement(random_covariance(k, rng, (1.0, 2.0), 1.5))


def omega(k):
    return symplectic_form(k)
