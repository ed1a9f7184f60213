import numpy as np
import pytest

from revspec.spectra import WavenumberAxis

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def axis():
    return WavenumberAxis.default()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
