import numpy as np
import pytest

from asyncra.channel import es_n0_to_sigma2
from asyncra.protograph import builtin


@pytest.fixture(scope="session")
def sigma_6db():
    return es_n0_to_sigma2(6.0)


@pytest.fixture(scope="session")
def adhoc():
    return builtin("AdHoc")


@pytest.fixture(scope="session")
def fiveg():
    return builtin("FiveG")


@pytest.fixture(scope="session")
def fiveg_perm():
    return builtin("FiveGPermuted")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance reporting: one PASS/FAIL line per criterion at the end of the run

_CRITERIA: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = getattr(item, "criterion_detail", "")
        if rep.failed and not detail:
            detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else "error"
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        _CRITERIA[n] = (status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {detail}")
