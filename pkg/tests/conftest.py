import numpy as np
import pytest

from rdpca.bayes import DensityCurve, Grid


@pytest.fixture
def unit_grid():
    return Grid(0.0, 1.0, 100)


def random_density(grid, rng, scale=1.0):
    """Smooth positive density: exp of a random low-order trig series."""
    t = (grid.points - grid.a) / grid.length
    coef = rng.normal(scale=scale, size=6)
    log_f = sum(c * np.cos((j + 1) * np.pi * t) for j, c in enumerate(coef))
    return DensityCurve.normalized(grid, np.exp(log_f))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ----------------------------------------------------------

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance(capsys):
    """Record and print one pass/fail line per acceptance criterion."""

    def emit(number, ok, detail):
        line = f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
