import numpy as np
import pytest

from nmfdereverb.signal_io import Waveform


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def noise_wave(rng):
    return Waveform(0.3 * rng.standard_normal(16000), 16000)


# (criterion, passed, detail) rows collected by the acceptance suite
ACCEPTANCE_RESULTS = []


@pytest.fixture
def acceptance():
    def record(criterion, passed, detail=""):
        ACCEPTANCE_RESULTS.append((criterion, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status}  {criterion}: {detail}")
