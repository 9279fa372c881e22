import os

import pytest
from hypothesis import HealthCheck, settings

from fnndse.config import load_config
from fnndse.harness import build_problem

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def toy_cfg():
    return load_config("toy.yaml")


@pytest.fixture(scope="session")
def reduced_cfg():
    return load_config("reduced.yaml")


@pytest.fixture(scope="session")
def table1_cfg():
    return load_config()


@pytest.fixture
def toy_problem(toy_cfg):
    return build_problem(toy_cfg)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion reported in the summary")


_CRITERIA: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None or rep.when not in ("setup", "call"):
        return
    n, title = m.args
    if rep.failed or (rep.when == "call" and n not in _CRITERIA):
        _CRITERIA[n] = (title, "FAIL" if rep.failed else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {title}")
