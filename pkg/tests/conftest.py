import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Keep one pass/fail line per acceptance criterion."""
    _RESULTS[criterion] = f"CRITERION {criterion} {'PASS' if ok else 'FAIL'}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS):
        terminalreporter.write_line(_RESULTS[key])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
