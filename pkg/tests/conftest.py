import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=30, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_symmetric(rng, K):
    A = rng.standard_normal((2 * K, 2 * K))
    return (A + A.T) / 2


def random_distinct_angles(rng, n, gap=0.05):
    """``n`` sorted angles in (0, 2 pi] separated by at least ``gap``."""
    while True:
        a = np.sort(rng.uniform(1e-3, 2 * np.pi, n))
        d = np.diff(np.concatenate([a, [a[0] + 2 * np.pi]]))
        if d.min() > gap:
            return a


# one summary line per acceptance criterion, printed after the test run
CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    def record(number: int, ok: bool, detail: str) -> bool:
        CRITERIA[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(CRITERIA[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
