import numpy as np
import pytest

from robustdoa.rnis import LyapunovFn, PlantSet, rnisevia
from robustdoa.synth import extract_controller, linear_gain, lyapunov_from_P, spec_from_coefficients

FHAT = "-sin(2*x1) - x1*u1 - 0.2*x1 - u1^2 + u1"
DELTA = "1 - exp(-0.5*(x1^2 + u1^2))"
LSTAR = {(2,): 1.1286, (3,): 2.3121, (4,): 1.5327}


@pytest.fixture(scope="session")
def plant():
    return PlantSet.from_strings([FHAT], [DELTA], "[-2,2],[-2,2]", 1, 1)


@pytest.fixture(scope="session")
def gain(plant):
    return linear_gain(plant)


@pytest.fixture(scope="session")
def lstar():
    return lyapunov_from_P(spec_from_coefficients(LSTAR, 1, 2))


@pytest.fixture(scope="session")
def run_x2(plant, gain):
    history = []
    res = rnisevia(plant, LyapunovFn.from_text("x1^2", 1), 1e-3, core=[gain[1]], history=history)
    res.history = history
    return res


@pytest.fixture(scope="session")
def run_lstar(plant, gain, lstar):
    history = []
    res = rnisevia(plant, lstar, 1e-3, core=[gain[1]], history=history)
    res.history = history
    return res


@pytest.fixture(scope="session")
def ctl_x2(plant, gain, run_x2):
    return extract_controller(plant, run_x2.paving, *gain)


@pytest.fixture(scope="session")
def ctl_lstar(plant, gain, run_lstar):
    return extract_controller(plant, run_lstar.paving, *gain)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance report ---------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or report.failed:
        num, title = props["criterion"]
        status = "PASS" if report.passed else "FAIL"
        _CRITERIA[num] = (status, title, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[num]
        line = f"criterion {num}: {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
