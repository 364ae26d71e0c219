import numpy as np
import pytest

from s2sl.datasets import gen_gaussian_two_class
from s2sl.numkit import RngStream

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def rng():
    return RngStream(1234)


@pytest.fixture
def toy_dataset():
    """Small, well separated two-class set (d=3, 10 + 8 rows)."""
    return gen_gaussian_two_class(d=3, n1=10, n2=8, separation=4.0, seed=5)


def random_batch(rng: RngStream, n: int, d: int, out: int, activation: str):
    x = rng.gaussian(0.0, 1.0, (n, d))
    if activation == "sigmoid":
        t = (rng.uniform(0, 1, (n, out)) > 0.5).astype(float)
    else:
        t = np.eye(out)[rng.generator.integers(0, out, n)]
    return x, t


@pytest.fixture
def record_criterion(request):
    """Callable ``(name, passed, detail)`` feeding the acceptance summary."""
    results = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(name: str, passed: bool, detail: str) -> bool:
        results.append((name, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_ACCEPTANCE, [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in results:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
