import numpy as np
import pytest

from beamstab.model import straight_reference
from beamstab.params import BeamParams, derive_matrices


@pytest.fixture(scope="session")
def toy_params():
    return BeamParams(
        rho=1.0, area=1.0, young=4.0, shear=1.0, moment2=1.0, moment3=1.0,
        k1=1.0, k2=1.0, k3=1.0, length=1.0, mu1=np.sqrt(2.0), mu2=2.0,
    )


@pytest.fixture(scope="session")
def toy_matrices(toy_params):
    return derive_matrices(toy_params)


@pytest.fixture(scope="session")
def toy_reference(toy_params):
    return straight_reference(toy_params, 32)


@pytest.fixture(scope="session")
def asym_params():
    """Toy-scale beam with distinct section moments (breaks accidental symmetry)."""
    return BeamParams(
        rho=1.3, area=0.8, young=5.0, shear=1.7, moment2=0.6, moment3=1.9,
        k1=0.9, k2=0.8, k3=1.1, length=1.4, mu1=1.0, mu2=2.5,
    )


@pytest.fixture(scope="session")
def asym_matrices(asym_params):
    return derive_matrices(asym_params)


def random_params(rng) -> BeamParams:
    """Log-uniform draw over a sane range, keeping matrix entries O(1e3)."""
    def lu(lo, hi):
        return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))

    return BeamParams(
        rho=lu(0.1, 10.0), area=lu(0.1, 10.0), young=lu(0.5, 50.0), shear=lu(0.5, 50.0),
        moment2=lu(0.1, 10.0), moment3=lu(0.1, 10.0),
        k1=lu(0.5, 1.5), k2=lu(0.5, 1.5), k3=lu(0.5, 1.5),
        length=lu(0.5, 2.0), mu1=lu(0.1, 10.0), mu2=lu(0.1, 10.0),
    )
