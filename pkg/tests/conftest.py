import warnings

import numpy as np
import pytest

from atriareg.volume import Mask3, Volume3

warnings.filterwarnings("ignore", message=".*TBB.*")

SPACING = (1.72, 1.72, 2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def vol(data, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    return Volume3(np.asarray(data, dtype=float), spacing, origin)


def mask(data, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    return Mask3(np.asarray(data, dtype=bool), spacing, origin)


def block_mask(dims, lo, size, spacing=(1.0, 1.0, 1.0)):
    m = np.zeros(dims, dtype=bool)
    m[tuple(slice(a, a + s) for a, s in zip(lo, size))] = True
    return mask(m, spacing)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
