import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> (passed, detail), filled by the ``acceptance`` fixture
_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance(request):
    """Call ``acceptance(k, ok, detail)`` once per criterion; the line is printed
    immediately and repeated in the terminal summary."""

    def report(k: int, ok: bool, detail: str) -> None:
        _RESULTS[k] = (bool(ok), detail)
        print(f"ACCEPTANCE {k}: {'PASS' if ok else 'FAIL'} ({detail})")

    request.node.acceptance_report = report
    return report


def pytest_runtest_makereport(item, call):
    # a criterion whose test errored before reporting still gets a FAIL line
    k = getattr(item.function, "criterion", None)
    if k is not None and call.when == "call" and call.excinfo is not None and k not in _RESULTS:
        _RESULTS[k] = (False, f"{call.excinfo.typename}: {call.excinfo.value}")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance")
    for k in sorted(_RESULTS):
        ok, detail = _RESULTS[k]
        terminalreporter.write_line(f"ACCEPTANCE {k}: {'PASS' if ok else 'FAIL'} ({detail})")
