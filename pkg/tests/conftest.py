import time

import numpy as np
import pytest

from hisoflow import experiments

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _timed(fn):
    start = time.perf_counter()
    report = fn()
    report.elapsed = time.perf_counter() - start
    return report


@pytest.fixture(scope="session")
def logreg_report():
    """The default distributed logistic regression run, shared across modules."""
    return _timed(experiments.run_logreg)


@pytest.fixture(scope="session")
def quartic_report():
    return _timed(experiments.run_quartic)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
