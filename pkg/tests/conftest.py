import numpy as np
import pytest

from heckselect.model import Dataset, SlParams
from heckselect.simgen import DgpConfig, generate, replicate_rng

# Lines collected by the acceptance module, printed at the end of the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line[1])


def small_dataset(n=60, seed=0, family="normal", nu=np.inf, rho=0.6):
    cfg = DgpConfig(family=family, nu=nu, n=n, rho=rho, seed=seed)
    return generate(cfg, replicate_rng(seed, 0))


@pytest.fixture
def data60():
    return small_dataset()


@pytest.fixture
def params_n():
    return SlParams([0.9, 0.45], [0.6, 0.35, -0.45], 1.2, 0.5)


@pytest.fixture
def params_t():
    return SlParams([0.9, 0.45], [0.6, 0.35, -0.45], 1.2, 0.5, 5.5)


def ten_rows():
    """Fixed 10-row dataset used for frozen log-likelihood values."""
    w = np.column_stack([np.ones(10),
                         [-0.9, -0.5, -0.2, 0.0, 0.1, 0.3, 0.45, 0.6, 0.8, 0.95],
                         [0.3, -1.2, 0.5, 1.1, -0.4, 0.0, 2.0, -0.7, 0.9, -1.5]])
    c = np.array([1, 0, 1, 1, 0, 1, 1, 0, 1, 1])
    v = np.array([0.2, np.nan, 1.4, 0.5, np.nan, 2.2, -0.3, np.nan, 1.9, 0.8])
    return Dataset(c, v, w[:, :2], w)
