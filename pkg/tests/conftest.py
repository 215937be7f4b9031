from __future__ import annotations

import pytest

from ielab import det_parameters, micro_det_1, micro_stoch_1
from ielab.priors import PriorTables


@pytest.fixture(scope="session")
def det_factored():
    return micro_det_1()


@pytest.fixture(scope="session")
def det_prior(det_factored):
    return det_factored.expand()


@pytest.fixture(scope="session")
def det_config(det_factored):
    cfg, _ = det_parameters(det_factored)
    return cfg


@pytest.fixture(scope="session")
def det_tables(det_prior):
    return PriorTables(det_prior)


@pytest.fixture(scope="session")
def stoch_factored():
    return micro_stoch_1()


@pytest.fixture(scope="session")
def stoch_prior(stoch_factored):
    return stoch_factored.expand()


@pytest.fixture(scope="session")
def stoch_tables(stoch_prior):
    return PriorTables(stoch_prior)
