import numpy as np
import pytest

from nctorus.algebra import theta_matrix

THETA = {(1, 2): 0.31, (1, 3): 0.17, (1, 4): 0.23, (2, 3): 0.41, (2, 4): 0.13, (3, 4): 0.29}


@pytest.fixture
def theta():
    return theta_matrix(THETA)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record and print one pass/fail line for an acceptance criterion."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
