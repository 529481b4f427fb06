import numpy as np
import pytest

from mftsgp.design import Design, NestedDesignPair


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_nested(rng, n_low, n_high, d):
    """Random nested pair: the high points are the first ``n_high`` low points, shuffled."""
    low = rng.random((n_low, d))
    imap = rng.permutation(n_low)[:n_high]
    return NestedDesignPair(Design(low), Design(low[imap]), imap)


def dense_kriging_inverse(K):
    """Explicit inverse used by the dense oracles."""
    return np.linalg.inv(K)


ACCEPTANCE_LINES = {}


def record_criterion(number: int, passed: bool, detail: str) -> str:
    line = f"CRITERION {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
