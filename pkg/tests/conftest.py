import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from choixgrade.data.dataset import build_five_class_dataset
from choixgrade.data.idx import emnist_upright
from choixgrade.data.synthetic import synthetic_letters

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=300,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def letter_pool():
    """Upright synthetic glyphs, 60 per letter."""
    images, labels = synthetic_letters(60, seed=11)
    return emnist_upright(images), labels


@pytest.fixture(scope="session")
def small_dataset(letter_pool):
    """48 train / 8 val per class."""
    images, labels = letter_pool
    return build_five_class_dataset(images, labels, seed=5, scale=0.01)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary -------------------------------------------------------

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): an acceptance criterion")
    config.stash[_ACCEPTANCE] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        detail = "; ".join(v for k, v in item.user_properties if k == "detail")
        if rep.skipped and isinstance(rep.longrepr, tuple):
            detail = (detail + "; " if detail else "") + rep.longrepr[2].removeprefix("Skipped: ")
        elif rep.failed and not detail:
            detail = str(rep.longrepr).strip().splitlines()[-1][:160]
        number, title = marker.args
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        item.config.stash[_ACCEPTANCE].append((number, title, status, detail))


def pytest_terminal_summary(terminalreporter, config):
    lines = sorted(config.stash.get(_ACCEPTANCE, []))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status, detail in lines:
        terminalreporter.write_line(f"criterion {number:2d} {status}  {title}: {detail}")
