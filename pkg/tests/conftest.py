import numpy as np
import pytest

from rolldyn import spectra, study, synthlab
from rolldyn.ingest import MeasurementRun


@pytest.fixture(scope="session")
def second_order_params():
    """zeta = 0.2, f_n = 1.4 Hz, k = 0.19 with a fast lateral block."""
    return synthlab.VehicleParams(f_n=1.4, zeta=0.2, k=0.19, g_ay=0.13, tau_lat=0.02, c_t=0.14, d_t=0.002)


@pytest.fixture(scope="session")
def chirp_run(second_order_params):
    return synthlab.synth_run(second_order_params, synthlab.ChirpSpec(), variant_id="so")


@pytest.fixture(scope="session")
def chirp_responses(chirp_run):
    return spectra.roll_responses(chirp_run)


@pytest.fixture(scope="session")
def study_fixture():
    return study.study_cvs()


@pytest.fixture(scope="session")
def liking():
    return study.study_ratings("liking")


def make_run(x, y=None, fs=100.0, variant="v", **channels):
    """Run whose a_y/delta_h/m_h carry ``x`` and phi carries ``y``."""
    x = np.asarray(x, dtype=float)
    y = x if y is None else np.asarray(y, dtype=float)
    t = np.arange(x.size) / fs
    base = dict(t=t, delta_h=x, m_h=x, a_y=x, phi=y)
    base.update(channels)
    return MeasurementRun(variant_id=variant, v=100.0, ay_target=4.0, sample_rate=fs, **base)


ACCEPTANCE_LINES: list[str] = []


def acceptance(criterion: str, ok: bool, detail: str) -> None:
    """Record one acceptance line; printed in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
