import numpy as np
import pytest
from hypothesis import settings

from pmcf.ambient import AmbientMetric, quadrupole
from pmcf.sphere import SphericalGrid

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid24():
    return SphericalGrid(24)


@pytest.fixture(scope="session")
def grid16():
    return SphericalGrid(16)


@pytest.fixture(scope="session")
def schwarzschild():
    return AmbientMetric(n=2, m=2.0)


@pytest.fixture(scope="session")
def flat():
    return AmbientMetric(n=2, m=0.0)


@pytest.fixture(scope="session")
def perturbed():
    return AmbientMetric(n=2, m=2.0, perturbation=quadrupole(1e-3, n=2, m=2.0))


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.VERDICTS):
        terminalreporter.write_line(mod.VERDICTS[k])
