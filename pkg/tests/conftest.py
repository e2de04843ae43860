import numpy as np
import pytest

from twistens.oracle import build_spectral_table
from twistens.phase import FrequencyModel, action_cosine, complex_position
from twistens.sampling import GaussianPhaseSpace, SeedPlan, UniformBandCosine


@pytest.fixture(scope="session")
def model():
    return FrequencyModel.cubic(0.3, 0.1, 0.005)


@pytest.fixture(scope="session")
def cloud():
    return GaussianPhaseSpace(q0=1.0, p0=0.0, eps0=0.01)


@pytest.fixture(scope="session")
def band():
    return UniformBandCosine(I_lo=0.2, I_hi=1.8, coupling=0.8)


@pytest.fixture(scope="session")
def G_complex():
    return complex_position()


@pytest.fixture(scope="session")
def G_real():
    return action_cosine()


@pytest.fixture(scope="session")
def plan():
    return SeedPlan(master_seed=101)


@pytest.fixture(scope="session")
def table_small(G_complex, cloud, model):
    # enough for j up to ~1e3; large-j work needs table_fine
    return build_spectral_table(G_complex, cloud, model, k_max=16, n_nodes=400)


@pytest.fixture(scope="session")
def table_fine(G_complex, cloud, model):
    # composite rule resolves the mode phases out to j = 1e4
    return build_spectral_table(G_complex, cloud, model, k_max=16, n_nodes=4000,
                                panels=100)


@pytest.fixture(scope="session")
def table_real(G_real, cloud, model):
    return build_spectral_table(G_real, cloud, model, k_max=16, n_nodes=400)


@pytest.fixture(scope="session")
def table_band(G_complex, band, model):
    return build_spectral_table(G_complex, band, model, k_max=2, n_nodes=6000,
                                theta_points=64, panels=150)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
