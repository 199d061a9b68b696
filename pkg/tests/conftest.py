import numpy as np
import pytest

from branchflow.field import make_grid


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def grid16():
    return make_grid(3, 16, 4.0)


@pytest.fixture
def grid32():
    return make_grid(3, 32, 8.0)


def single_mode(grid, modes, comp=None):
    """cos of one lattice mode; returns samples and the wavevector."""
    xs = grid.coords()
    k = [np.pi * m / grid.L for m in modes]
    phase = sum(kk * (x + grid.L) for kk, x in zip(k, xs))
    vals = np.broadcast_to(np.cos(phase), grid.shape).copy()
    return vals, np.array(k)


ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
