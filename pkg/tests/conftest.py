import numpy as np
import pytest

from hfhrlab.experiments import generate_classification_data, generate_linreg_data
from hfhrlab.potentials import (
    ClassificationPotential,
    GaussianPotential,
    LinearRegressionPotential,
    MultiWellPotential,
)


@pytest.fixture(scope="session")
def mw1():
    return MultiWellPotential(1, 2.0)


@pytest.fixture(scope="session")
def mw8():
    return MultiWellPotential(8, 2.0)


@pytest.fixture(scope="session")
def gauss1():
    return GaussianPotential(1, 2.0)


@pytest.fixture(scope="session")
def gauss2():
    return GaussianPotential(2, 2.0)


@pytest.fixture(scope="session")
def lr6():
    X, y = generate_linreg_data(60, seed=5)
    return LinearRegressionPotential(X, y, sigma=0.4, iota=0.1, p=1.2, eps=1e-3,
                                     gamma=1.0)


@pytest.fixture(scope="session")
def bc4():
    X, y = generate_classification_data(80, 4, seed=9)
    return ClassificationPotential(X, y, iota=0.05, t0=2.0, gamma=1.0)


def phase_grid(dim, radius=20.0, n_rad=512, n_ang=512, seed=1):
    """Polar phase-space grid filling the box max(|q|, |p|) <= radius."""
    gen = np.random.Generator(np.random.Philox(key=seed))
    dirs = gen.standard_normal((n_ang, 2 * dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    qn = np.linalg.norm(dirs[:, :dim], axis=1)
    pn = np.linalg.norm(dirs[:, dim:], axis=1)
    scale = radius / np.maximum(qn, pn)
    fracs = np.linspace(1.0 / n_rad, 1.0, n_rad)
    z = (fracs[:, None, None] * (dirs * scale[:, None])[None, :, :]).reshape(-1, 2 * dim)
    return z[:, :dim], z[:, dim:]
