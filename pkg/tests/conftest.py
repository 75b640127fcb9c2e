import numpy as np
import pytest

from annscope import _backend
from annscope.dataset import VectorDataset

ACCEPTANCE_LINES: list[str] = []

_BACKENDS = [pytest.param(_backend.python_kernels, id="python")]
if _backend.compiled_kernels is not None:
    _BACKENDS.append(pytest.param(_backend.compiled_kernels, id="cython"))


@pytest.fixture(params=_BACKENDS)
def kernels(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dataset(rng, n, dim, integer=False):
    if integer:
        return VectorDataset(rng.integers(0, 4, size=(n, dim)).astype(np.float32))
    return VectorDataset(rng.random((n, dim)).astype(np.float32))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
