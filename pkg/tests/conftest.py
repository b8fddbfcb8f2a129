import numpy as np
import pytest

from nlmagic.qudit import PureBipartiteState


def random_state(n, rng):
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return PureBipartiteState.normalised(x)


def random_spectra(n, count, rng):
    v = np.abs(rng.normal(size=(count, n)))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE_LINES = []


def record_criterion(line):
    _ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
