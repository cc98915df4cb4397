import math

import numpy as np
import pytest

from kinetic_coupler import CouplingControls, ModelParams, PotentialSpec, build_bundle, make_potential

SQRT30 = math.sqrt(30.0)


@pytest.fixture(scope="session")
def linear_params():
    return ModelParams(1, 1.0, SQRT30)


@pytest.fixture(scope="session")
def linear_bundle(linear_params):
    pot = make_potential(PotentialSpec("quadratic", L=1.0, R=1.0))
    return build_bundle(pot, linear_params)


@pytest.fixture(scope="session")
def linear_controls(linear_bundle):
    return CouplingControls.from_geometry(linear_bundle.geometry)


@pytest.fixture(scope="session")
def intro_bundle(linear_params):
    pot = make_potential(PotentialSpec("intro_double_well", a=1.0))
    return build_bundle(pot, linear_params)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
