import numpy as np
import pytest

from coreshell.bodies import load_body
from coreshell.dynamics import (
    AveragedField,
    ModelCoefficients,
    SpinState,
    integrate,
)


@pytest.fixture(scope="session")
def ganymede():
    return load_body("ganymede")


@pytest.fixture(scope="session")
def mercury():
    return load_body("mercury")


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def kernel_warm():
    """Compile (or load from cache) the integrator kernel once per session."""
    coeffs = ModelCoefficients(A_crust=1.0, A_core=0.0, inv_tau_gamma=0.0,
                               inv_tau_eta=0.0, inv_tau_eta_prime=0.0,
                               drift=0.0, k=1, time_unit="s")
    integrate(AveragedField(coeffs), SpinState(0.0, 0.1, 0.0, 0.0, 0.0),
              1.0, 1e-8)
    return True
