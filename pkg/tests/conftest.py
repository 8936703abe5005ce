import numpy as np
import pytest

from fracdisloc.elastic_core import make_isotropic


@pytest.fixture(scope="session")
def iso():
    return make_isotropic(1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria register one line each; printed after the run
ACCEPTANCE = []


@pytest.fixture
def criterion():
    def report(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        ACCEPTANCE.append(line)
        print(line)
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
