import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hydrospde.fields import random_h_field
from hydrospde.spectral import EVEN, NONE, SpectralField, symmetrize

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def band_limited(grid, seed, parity=NONE, decay=1.0):
    """Random real field with every coefficient inside the 2/3 band."""
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(grid) + 1j * rng.standard_normal(grid)
    mx = np.fft.fftfreq(grid[0], 1.0 / grid[0])[:, None]
    mz = np.fft.fftfreq(grid[1], 1.0 / grid[1])[None, :]
    c = c * (1.0 + np.hypot(mx, mz)) ** (-decay)
    return SpectralField(symmetrize(c, parity), parity)


def h_field(grid, seed, **kw):
    return random_h_field(grid, np.random.default_rng(seed), **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --- acceptance summary -------------------------------------------------

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_crit" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        detail = dict(report.user_properties).get("detail", "")
        _ACCEPTANCE[name] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        outcome, detail = _ACCEPTANCE[name]
        num = int(name[len("test_crit"):len("test_crit") + 2])
        label = name[len("test_crit") + 3:].replace("_", " ")
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d} {verdict}  {label}: {detail}")
