import random

import pytest

from enkvote import numtheory as nt


@pytest.fixture(scope="session")
def g768():
    return nt.GroupParams.well_known(nt.TEST_GROUP)


@pytest.fixture(scope="session")
def g2048():
    return nt.GroupParams.well_known(nt.PRODUCTION_GROUP)


@pytest.fixture(scope="session")
def g64():
    return nt.generate_group(64, rng=random.Random("fixture:g64"))


@pytest.fixture(scope="session")
def g23():
    return nt.GroupParams.from_prime(23)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
