import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fairbound.synthetic import biased_dataset, students_dataset, write_census_like_csv

settings.register_profile(
    "suite",
    max_examples=40,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def students():
    return students_dataset()


@pytest.fixture(scope="session")
def guarantee_family():
    """Discrete biased family member used for the budget-guarantee runs."""
    return biased_dataset(n_cell=200, bias=0.005, a_logit=1.2, b_logit=0.4)


@pytest.fixture(scope="session")
def comparison_family():
    """Family member for the baseline comparison sweeps."""
    return biased_dataset(n_cell=200, bias=0.01, a_logit=0.5, b_logit=0.1)


@pytest.fixture(scope="session")
def census_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("census") / "census.data"
    return write_census_like_csv(path, n_rows=6000, seed=7)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
