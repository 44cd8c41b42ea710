import re
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record one acceptance line, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        _VERDICTS[number] = f"{'PASS' if ok else 'FAIL'}  criterion {number:2d}  {title}: {detail}"
        print(_VERDICTS[number])
        assert ok, _VERDICTS[number]

    return record


def pytest_terminal_summary(terminalreporter):
    # a criterion test that crashed before recording still gets a FAIL line
    for rep in terminalreporter.stats.get("failed", []) + terminalreporter.stats.get("error", []):
        match = re.search(r"test_acceptance\.py::test_c(\d+)_(\w+)", rep.nodeid)
        if match and int(match.group(1)) not in _VERDICTS:
            n = int(match.group(1))
            _VERDICTS[n] = f"FAIL  criterion {n:2d}  {match.group(2)}: raised before reporting"
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[n])
