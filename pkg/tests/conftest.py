import math

import numpy as np
import pytest

from ecorbits import ContinuationConfig, FinderConfig, IntegratorConfig


@pytest.fixture(scope="session")
def fast_finder():
    """Coarse angle grid for qualitative checks; roots are still refined to 1e-12."""
    return FinderConfig(grid_size=256)


@pytest.fixture(scope="session")
def hill_cont():
    """Hill sweeps: quarter-turn reduced grid of 256 and a 0.01 energy step."""
    return ContinuationConfig(FinderConfig(grid_size=256, reduced=True), sweep_step=0.01)


def circ_dist(a, b, period=math.pi):
    d = (np.asarray(a) - np.asarray(b)) % period
    return np.minimum(d, period - d)


def sign_changes(values):
    v = np.asarray(values)
    return int(np.sum((v > 0) != (np.roll(v, -1) > 0)))


ACCEPTANCE = {}


def record(label, passed, detail=""):
    """Store one acceptance line; the terminal summary prints them in order."""
    ACCEPTANCE[label] = f"{'PASS' if passed else 'FAIL'}  {detail}".rstrip()
    print(f"criterion {label}: {ACCEPTANCE[label]}")
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for label in sorted(ACCEPTANCE, key=lambda s: (int(s.split()[0]), s)):
        terminalreporter.write_line(f"criterion {label}: {ACCEPTANCE[label]}")
