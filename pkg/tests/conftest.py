import numpy as np
import pytest

from hetoll import _core_py
from hetoll.model import NetworkInstance

try:
    from hetoll import _core
except ImportError:
    _core = None

BACKENDS = [pytest.param(_core_py, id="python")]
if _core is not None:
    BACKENDS.append(pytest.param(_core, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def two_road():
    """Two roads, one type: l1 = f, l2 = 1 + f, unit demand."""
    return NetworkInstance([[1.0], [1.0]], [0.0, 1.0], [1.0], name="two-road")


@pytest.fixture
def symmetric():
    return NetworkInstance(np.ones((2, 2)), [0.0, 0.0], [1.0, 1.0], name="sym")


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


def cyclic_prone_instance(rng, n, m):
    """Slopes independent of type on each road, so whole families of splits are optimal."""
    u = rng.uniform(0.5, 3.0, size=n)
    return NetworkInstance(np.repeat(u[:, None], m, axis=1), rng.uniform(0.0, 1.0, n), rng.uniform(0.5, 2.0, m))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
