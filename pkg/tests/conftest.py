import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from formtwin.dataset import split_train_validation
from formtwin.plant import PlantParams, simulate_plan
from formtwin.reduction import fit_reduction, reduce_episode
from formtwin.toolpath import lhs_sequences

settings.register_profile("formtwin", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("formtwin")

_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])


@pytest.fixture
def acceptance(request, capsys):
    """``record(number, ok, detail)`` prints one PASS/FAIL line and keeps it for the summary."""
    store = request.config.stash[_ACCEPTANCE]

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        store[number] = line
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return record


@pytest.fixture(scope="session")
def default_plan():
    return lhs_sequences(seed=0)


@pytest.fixture(scope="session")
def default_episodes(default_plan):
    return simulate_plan(default_plan, PlantParams())


@pytest.fixture(scope="session")
def default_split(default_episodes):
    return split_train_validation(default_episodes, 5, 0)


@pytest.fixture(scope="session")
def default_bases(default_split):
    return fit_reduction(default_split[0])


@pytest.fixture(scope="session")
def reduced_split(default_split, default_bases):
    train, val = default_split
    return ([reduce_episode(default_bases, e) for e in train],
            [reduce_episode(default_bases, e) for e in val])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
