import numpy as np
import pytest

from llpfc.bags import Dataset


def gaussian_mixture(n, rng, C=3, scale=0.5):
    """Classes centred at the C-th roots of unity on the unit circle."""
    y = rng.integers(0, C, n)
    angle = 2.0 * np.pi * y / C
    X = np.c_[np.cos(angle), np.sin(angle)] + scale * rng.standard_normal((n, 2))
    return Dataset(X, y, C)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


def record_acceptance(number, passed, detail):
    line = f"acceptance {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE.append(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance summary")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
