import functools
import logging

import numpy as np
import pytest

from qphase.limit_cycle import find_limit_cycle
from qphase.models import build_model

# criterion number -> (passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE = {}


@functools.lru_cache(maxsize=None)
def cached_cycle(name):
    """Limit cycle of a catalog preset, found once per session."""
    return find_limit_cycle(build_model(name))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def qubit_cycle():
    return cached_cycle("fig3a")


@pytest.fixture(scope="session")
def bitflip_cycle():
    return cached_cycle("bitflip")


def pytest_configure(config):
    logging.getLogger("qphase").setLevel(logging.ERROR)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
