import numpy as np
import pytest

from qcollapse.model import make_params


@pytest.fixture
def unit_free():
    return make_params(lam=2.0)


def assert_heisenberg(series, hbar):
    """Every row satisfies tau_q2*tau_p2 >= hbar**2/4 up to round-off."""
    prod = np.asarray(series.tau_q2) * np.asarray(series.tau_p2)
    assert np.all(prod >= hbar ** 2 / 4 * (1 - 1e-12)), prod.min()


_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or rep.failed:
        detail = dict(item.user_properties).get("detail", "")
        _ACCEPTANCE[marker.args[0]] = (marker.args[1], rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, passed, detail = _ACCEPTANCE[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number} {status}: {title} | {detail}")
