from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"
ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict[str, str] = {}


@pytest.fixture
def acceptance():
    """Record one verdict line per acceptance criterion; printed in the terminal summary.

    ``ok=None`` marks a criterion that could not be run.
    """

    def record(key, name, ok, detail, seconds, budget):
        within = seconds < budget
        verdict = "SKIP" if ok is None else "PASS" if ok and within else "FAIL"
        if ok and not within:
            detail += " [over time budget]"
        line = f"{verdict}  {key:<8} {name}: {detail}  ({seconds:.2f} s of {budget:g} s)"
        ACCEPTANCE[key] = line
        print(line)
        return ok and within

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")

    def order(key):
        num, _, rest = key.partition("-")
        return int(num), rest

    for key in sorted(ACCEPTANCE, key=order):
        terminalreporter.write_line(ACCEPTANCE[key])
