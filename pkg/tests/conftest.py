import numpy as np
import pytest

from exittail.chain_core import EventSet, GeneratorChain, ReversibleChain


@pytest.fixture
def two_state():
    """Kernel [[1/2, 1/2], [1/4, 3/4]] with stationary law (1/3, 2/3)."""
    K = np.array([[0.5, 0.5], [0.25, 0.75]])
    return ReversibleChain(K, np.array([1 / 3, 2 / 3]))


@pytest.fixture
def two_state_generator():
    # rates 0 -> 1 at 2, 1 -> 0 at 1
    Q = np.array([[-2.0, 2.0], [1.0, -1.0]])
    return GeneratorChain(Q, np.array([1 / 3, 2 / 3]))


@pytest.fixture
def iid_half():
    """Four states, each step an independent uniform draw; {0, 1} has mass 1/2."""
    K = np.full((4, 4), 0.25)
    chain = ReversibleChain(K, np.full(4, 0.25))
    return chain, EventSet.of(chain, [0, 1])


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "SUMMARY_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
