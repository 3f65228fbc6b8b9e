import numpy as np
import pytest

from dssmor.model import DssModel, exp_params_to_model, random_stable_model


def random_model(n, seed, m=1, p=1, delta=None, margin=0.05):
    """Dense-coefficient random stable model with ``Re(lam) <= -margin``."""
    rng = np.random.default_rng(seed)
    lam = -(margin + rng.exponential(1.0, n)) + 1j * rng.normal(0, 2, n)
    b = rng.normal(size=(n, m)) + 1j * rng.normal(size=(n, m))
    c = rng.normal(size=(p, n)) + 1j * rng.normal(size=(p, n))
    return DssModel(lam, b, c, delta)


def random_exp_model(n, seed, delta=1.0):
    return exp_params_to_model(random_stable_model(n, seed, delta=delta))


@pytest.fixture
def scalar():
    return DssModel([-1.0], [[1.0]], [[1.0]], delta=np.log(2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
