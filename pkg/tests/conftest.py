import math

import numpy as np
import pytest

from ergoflow.flows import KroneckerFlow
from ergoflow.points import TorusPoint

SQ2, SQ3, SQ5 = math.sqrt(2.0), math.sqrt(3.0), math.sqrt(5.0)


@pytest.fixture
def kron_pair():
    """T moves the first two coordinates, S the second and third."""
    T = KroneckerFlow([SQ2, SQ3, 0.0])
    S = KroneckerFlow([0.0, 0.3 * SQ5, 0.0])
    return T, S, TorusPoint([0.1, 0.7, 0.3])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance pass/fail lines after the run."""
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
