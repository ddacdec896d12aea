import numpy as np
import pytest

from pubbound.data import load_troponin, prepare_dta
from pubbound.fit import fit_reitsma_ml


@pytest.fixture(scope="session")
def troponin_obs():
    return prepare_dta(load_troponin())


@pytest.fixture(scope="session")
def troponin_fit(troponin_obs):
    return fit_reitsma_ml(troponin_obs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = {}


def record_acceptance(criterion, passed, detail):
    ACCEPTANCE_LINES[criterion] = f"{criterion} {'PASS' if passed else 'FAIL'}: {detail}"
    print(ACCEPTANCE_LINES[criterion])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
