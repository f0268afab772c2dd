import numpy as np
import pytest

from locbmo.admissible import constant_rho, potential_from_spec, schrodinger_rho
from locbmo.kernels import schrodinger_family
from locbmo.space import build_grid_space, integer_model

_CRITERIA = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Store one acceptance line; printed by the terminal summary hook."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    _CRITERIA.setdefault(number, []).append((ok, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        for _, line in _CRITERIA[n]:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def line():
    """[-2, 2] at spacing 0.05, Lebesgue."""
    return build_grid_space(1, 2.0, 0.05)


@pytest.fixture(scope="session")
def zmodel():
    return integer_model(10)


@pytest.fixture(scope="session")
def v1_setup():
    """V = 1 on [-4, 4] at h = 0.02 with its kernel family and rho."""
    space = build_grid_space(1, 4.0, 0.02)
    v = potential_from_spec(space, {"kind": "constant", "value": 1.0})
    family = schrodinger_family(space, v)
    rho = schrodinger_rho(space, v)
    return space, v, family, rho


@pytest.fixture(scope="session")
def small_family():
    space = build_grid_space(1, 2.0, 0.05)
    v = potential_from_spec(space, {"kind": "constant", "value": 1.0})
    return space, schrodinger_family(space, v), constant_rho(space, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
