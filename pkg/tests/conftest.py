import numpy as np
import pytest

from heraldmem.config import reference_config


@pytest.fixture(scope="session")
def cfg():
    return reference_config()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# ---- acceptance summary: one line per criterion -------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.when == "setup" and not rep.passed:
        _CRITERIA[number] = (title, "FAIL", "setup error")
    elif rep.when == "call":
        _CRITERIA[number] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[number]
        line = f"criterion {number:2d} {status}  {title}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
