import numpy as np
import pytest

from pasta_hdr.autograd import ops


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def projected(fn, weights):
    """Wrap ``fn`` so its output is contracted with fixed weights. A plain sum
    would hide errors in ops whose outputs sum to a constant (softmax,
    layer norm)."""
    def wrapped(*tensors):
        return ops.mul(fn(*tensors), weights)
    return wrapped


# Filled by tests/test_acceptance.py; printed once at the end of the run.
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[n])
