import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

CRITERIA = []


def record_criterion(number, text, passed, detail=""):
    CRITERIA.append((number, text, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, text, passed, detail in sorted(CRITERIA, key=lambda c: c[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {text} {detail}".rstrip())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
