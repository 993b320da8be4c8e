import numpy as np
import pytest

from tensorstep.tt import tt_random


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_tt(rng, shape, rank, complex_=False):
    """Seeded TT tensor with every interior rank equal to ``rank`` (clipped)."""
    d = len(shape)
    ranks = []
    for k in range(1, d):
        left = int(np.prod(shape[:k]))
        right = int(np.prod(shape[k:]))
        ranks.append(min(rank, left, right))
    return tt_random(shape, ranks, rng, complex_=complex_)


def rel_err(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-300))


# acceptance lines are echoed once more at the end of the session, so they
# survive output capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
