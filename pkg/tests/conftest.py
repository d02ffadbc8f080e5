import numpy as np
import pytest

from hilbert_geo.manifolds import conformal_ball, flat, grossman_ellipsoid, grossman_sphere, unit_sphere

MODEL_FACTORIES = {
    "unit_sphere": unit_sphere,
    "grossman_sphere": grossman_sphere,
    "grossman_ellipsoid": grossman_ellipsoid,
    "flat": flat,
    "conformal_ball": conformal_ball,
}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=sorted(MODEL_FACTORIES))
def model(request):
    return MODEL_FACTORIES[request.param](6)


def unit(n, i):
    e = np.zeros(n)
    e[i] = 1.0
    return e


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
