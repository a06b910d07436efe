import numpy as np
import pytest

from geomflow.geometry import ChartPoint, parse_manifold
from geomflow.geometry.zoo import ZOO


@pytest.fixture(scope="session")
def zoo():
    return {k: parse_manifold(v) for k, v in ZOO.items()}


def point_of(m, seed=0, n=1):
    x, c = m.random_points(np.random.default_rng(seed), n)
    return [ChartPoint(x[i], c[i]) for i in range(n)]


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def record(criterion, ok, detail):
    ACCEPTANCE[criterion] = (bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
