import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(20241017)


def random_spd(rng, k, cond=None):
    """Random SPD matrix; with ``cond`` the spectrum is log-spaced to that condition number."""
    if cond is None:
        b = rng.standard_normal((k, k))
        return b @ b.T + 1e-3 * np.eye(k)
    q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    lam = np.logspace(0, -np.log10(cond), k) * rng.uniform(0.5, 5.0)
    a = (q * lam) @ q.T
    return 0.5 * (a + a.T)


_acceptance = {}


def pytest_runtest_logreport(report):
    if report.when == "call" or report.outcome != "passed":
        marker = getattr(report, "acceptance", None)
        if marker is not None:
            prev = _acceptance.get(marker, "PASS")
            _acceptance[marker] = "FAIL" if report.outcome != "passed" or prev == "FAIL" else "PASS"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is not None:
        report.acceptance = mark.args


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), status in sorted(_acceptance.items()):
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}")
