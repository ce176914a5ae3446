import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(scope="session")
def catenoid():
    from maxsurf.canonical import make_catenoid

    return make_catenoid(1.0, R=4.0)


@pytest.fixture(scope="session")
def catenoid_surface(catenoid):
    from maxsurf.weierstrass import integrate_immersion, polar_grid

    grid = polar_grid(128, 256, 0.25, 4.0)
    return integrate_immersion(catenoid, grid, (1.0, np.zeros(3)))


@pytest.fixture(scope="session")
def riemann15():
    from maxsurf.canonical import RiemannParameter, make_riemann

    return make_riemann(RiemannParameter(1.5, 1.0, 1))


# -- acceptance summary -------------------------------------------------------------

_CRITERIA = []


@pytest.fixture
def measured():
    """Dict a criterion test fills with the numbers it checked."""
    return {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    number, title = mark.args
    values = item.funcargs.get("measured") or {}
    detail = ", ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}" for k, v in values.items())
    _CRITERIA.append((number, "PASS" if rep.passed else "FAIL", title, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, title, detail in sorted(_CRITERIA):
        terminalreporter.write_line(f"criterion {number:2d} {status}  {title}" + (f"  [{detail}]" if detail else ""))
