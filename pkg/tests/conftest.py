import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    n, title = marker.args
    ok, _ = _ACCEPTANCE.get(n, (True, title))
    _ACCEPTANCE[n] = (ok and report.passed, title)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, title = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}")


# shared strategies

finite = dict(allow_nan=False, allow_infinity=False)


def plane_points(scale=3.0):
    return st.tuples(st.floats(-scale, scale, **finite), st.floats(-scale, scale, **finite)).map(np.array)


def disk_points(max_r=0.9):
    return st.tuples(st.floats(0.0, max_r, **finite), st.floats(0.0, 2 * math.pi, **finite)).map(
        lambda rt: np.array([rt[0] * math.cos(rt[1]), rt[0] * math.sin(rt[1])])
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
