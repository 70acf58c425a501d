import numpy as np
import pytest

_CRITERIA: list[tuple[str, bool, list[str]]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): test that decides one acceptance criterion")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def detail():
    """Free-form notes a criterion test attaches to its summary line."""
    return []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _CRITERIA.append((mark.args[0], rep.passed, list(item.funcargs.get("detail", []))))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for label, passed, notes in sorted(_CRITERIA, key=lambda r: r[0]):
        line = f"{'PASS' if passed else 'FAIL'}  {label}"
        if notes:
            line += "  [" + "; ".join(notes) + "]"
        terminalreporter.write_line(line)
