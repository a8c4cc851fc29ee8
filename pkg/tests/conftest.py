import pytest

from gemmforge.core import load_device_catalog
from gemmforge.versal import load_aie_solutions

ACCEPTANCE_RESULTS: list[str] = []


@pytest.fixture(scope="session")
def catalog():
    return load_device_catalog()


@pytest.fixture(scope="session")
def vc1902(catalog):
    return catalog.versal("VC1902")


@pytest.fixture(scope="session")
def nx2100(catalog):
    return catalog.stratix("NX2100")


@pytest.fixture(scope="session")
def solutions():
    return load_aie_solutions()


@pytest.fixture(scope="session")
def p1(solutions):
    return solutions["P1"]


@pytest.fixture(scope="session")
def p2(solutions):
    return solutions["P2"]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
