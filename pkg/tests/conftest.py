import numpy as np
import pytest

from uwbnlos.geometry import Anchor, Environment, Point2, make_segment


@pytest.fixture
def triangle_env():
    anchors = [Anchor(0, Point2(0, 0)), Anchor(1, Point2(10, 0)), Anchor(2, Point2(0, 10))]
    return Environment(anchors, [], (0.0, 0.0, 12.0, 12.0))


@pytest.fixture
def walled_env():
    anchors = [Anchor(i, Point2(x, y)) for i, (x, y) in
               enumerate([(0.5, 0.5), (13.5, 0.5), (13.5, 9.5), (0.5, 9.5), (7.0, 9.5)])]
    walls = [make_segment(4, 4, 10, 4), make_segment(7, 4, 7, 7)]
    return Environment(anchors, walls, (0.0, 0.0, 14.0, 10.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance reporting: one PASS/FAIL line per criterion -----------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    number, title = mark.args
    ok = rep.passed
    details = [v for k, v in item.user_properties if k == "detail"]
    prev = _CRITERIA.get(number)
    if prev is not None:
        ok = ok and prev[1]
        details = prev[2] + details
    _CRITERIA[number] = (title, ok, details)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, details = _CRITERIA[number]
        extra = f"  [{'; '.join(details)}]" if details else ""
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}{extra}")
