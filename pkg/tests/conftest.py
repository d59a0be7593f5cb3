import numpy as np
import pytest

from kinfrac import model


@pytest.fixture(scope="session")
def default_model():
    params = model.ModelParams(
        beta=2.0, gamma0=1.0, r0=1.0, omega0p=1.0,
        interface=model.InterfaceCoefficients.constant(0.3, 0.5, 0.2),
        bath_temperature=1.0)
    return model.validate(params)


@pytest.fixture(scope="session")
def cold_model():
    params = model.ModelParams(
        beta=2.0, gamma0=1.0, r0=1.0, omega0p=1.0,
        interface=model.InterfaceCoefficients.constant(0.3, 0.5, 0.2),
        bath_temperature=0.0)
    return model.validate(params)


@pytest.fixture(scope="session")
def mixture_model():
    params = model.ModelParams(
        beta=2.0, gamma0=1.0, r0=1.0, omega0p=1.0,
        interface=model.InterfaceCoefficients.constant(0.3, 0.5, 0.2),
        bath_temperature=1.0, kernel_form="mixture", mixture_weight=0.5)
    return model.validate(params)


@pytest.fixture(scope="session")
def perturbed_model():
    coeffs = model.InterfaceCoefficients.perturbed(0.3, 0.5, 0.2,
                                                   amplitude=0.15,
                                                   exponent=1.0)
    params = model.ModelParams(
        beta=2.0, gamma0=1.0, r0=1.0, omega0p=1.0, interface=coeffs,
        bath_temperature=1.0)
    return model.validate(params)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
