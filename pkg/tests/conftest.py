import numpy as np
import pytest

from lamhb import material
from lamhb.fe1d import StackGeometry
from lamhb.homog import HomogenizationParams

SIGMA = 10.4e6
D_SHEET = 5e-4
GAMMA = 0.985


@pytest.fixture(scope="session")
def steel():
    """The cold-rolled-steel exponential curve used throughout."""
    return material.BHCurve(material.PAPER_COLD_ROLLED_STEEL)


@pytest.fixture(scope="session")
def linear_400():
    return material.LinearMaterial(400.0)


@pytest.fixture(scope="session")
def sheet_geometry():
    return StackGeometry(n_laminations=1, d=D_SHEET)


@pytest.fixture(scope="session")
def stack_geometry():
    return StackGeometry(n_laminations=10, d=D_SHEET,
                         d_ins=D_SHEET * (1.0 / GAMMA - 1.0))


@pytest.fixture(scope="session")
def stack_params():
    return HomogenizationParams.from_stacking_factor(
        d=D_SHEET, gamma=GAMMA, sigma=SIGMA, nu_ins=material.NU_VAC)


@pytest.fixture(scope="session")
def sheet_params():
    return HomogenizationParams.from_stacking_factor(
        d=D_SHEET, gamma=1.0, sigma=SIGMA, nu_ins=material.NU_VAC)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240810)
