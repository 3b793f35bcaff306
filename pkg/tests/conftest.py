import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from penrose_jang import builders, harness  # noqa: E402
from penrose_jang import jang_solver as js  # noqa: E402
from penrose_jang.radial_core import find_outermost_horizon  # noqa: E402

ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    ACCEPTANCE_LINES.append((number, f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture
def criterion():
    return record_criterion


@pytest.fixture(scope="session")
def schw():
    return builders.schwarzschild_isotropic(1.0)


@pytest.fixture(scope="session")
def schw_horizon(schw):
    return find_outermost_horizon(schw)


@pytest.fixture(scope="session")
def schw_jang(schw, schw_horizon):
    return js.solve_jang_blowup(schw, schw_horizon)


@pytest.fixture(scope="session")
def bump():
    return builders.dec_bump()


@pytest.fixture(scope="session")
def bump_horizon(bump):
    return find_outermost_horizon(bump)


@pytest.fixture(scope="session")
def bump_jang(bump, bump_horizon):
    return js.solve_jang_blowup(bump, bump_horizon)


def _timed_run(name):
    t0 = time.perf_counter()
    report = harness.run(harness.scenario(name))
    report["wall_clock"] = time.perf_counter() - t0
    return report


@pytest.fixture(scope="session")
def schw_report():
    return _timed_run("schwarzschild")


@pytest.fixture(scope="session")
def bump_report():
    return _timed_run("dec_bump")


@pytest.fixture(scope="session")
def dec_reports(schw_report, bump_report):
    return {"schwarzschild": schw_report, "dec_bump": bump_report}
