import numpy as np
import pytest

from prtbw.model import Dataset


def make_random_instance(rng: np.random.Generator, n: int, p: int, shift: float = 0.3, y: bool = True) -> Dataset:
    """Well-overlapped observational data: mild logistic confounding."""
    X = rng.standard_normal((n, p))
    lin = shift * X[:, : min(p, 3)].sum(axis=1)
    z = (rng.random(n) < 1 / (1 + np.exp(-lin))).astype(float)
    if z.sum() < 2:
        z[:2] = 1
    if (1 - z).sum() < 2:
        z[-2:] = 0
    out = X @ np.linspace(0.5, -0.5, p) + z * (1 + 0.5 * X[:, 0]) + rng.standard_normal(n) if y else None
    return Dataset(z=z, X=X, y=out)


@pytest.fixture
def hull():
    """Control x = (-3, 1.5), treated x = (1, 2): the sample mean 0.375 lies
    outside the treated hull, the arms' hulls intersect on [1, 1.5]."""
    return Dataset(z=np.array([0, 0, 1, 1.0]), X=np.array([[-3.0], [1.5], [1.0], [2.0]]), y=np.array([1.0, 2, 4, 5]))


@pytest.fixture
def rct4():
    return Dataset(z=np.array([1, 0, 1, 0.0]), X=np.array([[2.0], [0.0], [4.0], [0.0]]), y=np.array([5.0, 1, 3, 1]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdicts, echoed once more at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
