import numpy as np
import pytest

import rbsdej as rb


@pytest.fixture(scope="session")
def flat_spec():
    return rb.build_problem("flat_obstacle")


@pytest.fixture(scope="session")
def flat_bundle(flat_spec):
    return rb.sample_paths(flat_spec, rb.build_grid(1.0, 1000), 4, seed=7)


@pytest.fixture(scope="session")
def flat_bundle_coarse(flat_spec):
    return rb.sample_paths(flat_spec, rb.build_grid(1.0, 100), 8, seed=7)


@pytest.fixture(scope="session")
def basis0():
    return rb.RegressionBasis(degree=0)


@pytest.fixture(scope="session")
def put_spec():
    return rb.build_problem("american_put")


@pytest.fixture(scope="session")
def put_bundle_small(put_spec):
    return rb.sample_paths(put_spec, rb.build_grid(1.0, 25), 4000, seed=11)


@pytest.fixture(scope="session")
def basis3():
    return rb.RegressionBasis(degree=3)
