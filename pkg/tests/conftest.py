import numpy as np
import pytest

from csiloc.nn import set_finite_checks


@pytest.fixture(autouse=True)
def finite_checks():
    # Every forward/backward value must stay finite; cheap to assert globally.
    set_finite_checks(True)
    yield
    set_finite_checks(False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
