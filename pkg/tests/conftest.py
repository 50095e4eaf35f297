import numpy as np
import pytest

from ncdirichlet.algebra import Algebra

# criterion number -> (title, detail); outcomes are filled from the test reports
_CRITERIA = {}
_OUTCOMES = {}


def random_blocks(rng, max_dim=3, max_blocks=3):
    nb = int(rng.integers(1, max_blocks + 1))
    dims = [int(d) for d in rng.integers(1, max_dim + 1, nb)]
    if max(dims) == 1:
        dims[0] = 2
    return tuple(dims)


def random_algebra(seed, max_dim=3, max_blocks=3):
    rng = np.random.default_rng([seed, 99])
    dims = random_blocks(rng, max_dim, max_blocks)
    return Algebra(dims, tuple(float(w) for w in rng.uniform(0.5, 2.0, len(dims)))), rng


@pytest.fixture
def criterion(request):
    """Record a one-line description for an acceptance criterion."""
    def record(number, title, detail=""):
        _CRITERIA[request.node.nodeid] = (number, title, detail)
    return record


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _OUTCOMES[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (number, title, detail) in sorted(_CRITERIA.items(), key=lambda kv: kv[1][0]):
        status = "PASS" if _OUTCOMES.get(nodeid) == "passed" else "FAIL"
        line = f"[{status}] criterion {number:2d}: {title}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
