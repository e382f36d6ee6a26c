import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE: dict[str, tuple[bool | None, str]] = {}

FULL = os.environ.get("LAUNCHLINE_FULL") == "1"


def pytest_collection_modifyitems(config, items):
    if FULL:
        return
    skip = pytest.mark.skip(reason="set LAUNCHLINE_FULL=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE, key=lambda k: (int(k.split()[0]), k)):
        ok, detail = ACCEPTANCE[n]
        status = "PASS" if ok else ("NOT RUN" if ok is None else "FAIL")
        terminalreporter.write_line(f"criterion {n}: {status}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
