import numpy as np
import pytest

from monomed.estimator import EstimatorConfig, estimate
from monomed.oracle import reference_dgm
from monomed.sim import sample_dgm


@pytest.fixture(scope="session")
def reference_data():
    return sample_dgm(reference_dgm(), 10_000, seed=20240607)


@pytest.fixture(scope="session")
def reference_fit(reference_data):
    return estimate(reference_data, EstimatorConfig(seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_line(request):
    """Record one pass/fail line for the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(criterion: int, ok: bool, detail: str):
        line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((criterion, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
