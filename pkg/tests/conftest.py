import numpy as np
import pytest

from fwmsqueeze.medium import TWO_PI, MediumConfig
from fwmsqueeze.sweep import calibrate_coupling

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def calibrated() -> MediumConfig:
    """Default medium recalibrated to a 50 ns pulse gain of 4.2."""
    return calibrate_coupling(4.2)


@pytest.fixture(scope="session")
def near_optimum(calibrated) -> MediumConfig:
    return calibrated.replace(delta=TWO_PI * 22.5e6)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE[name] = report.outcome
    elif "test_acceptance.py" in report.nodeid and report.when == "setup" and report.outcome != "passed":
        _ACCEPTANCE[report.nodeid.split("::")[-1]] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda n: int(n.split("_")[1]) if n.split("_")[1].isdigit() else 99):
        status = "PASS" if _ACCEPTANCE[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")
