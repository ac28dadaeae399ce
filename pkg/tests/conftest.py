from collections import defaultdict

import pytest

_CRITERIA: dict[int, list[tuple[bool, str]]] = defaultdict(list)


@pytest.fixture
def record():
    """Log one sub-check of an acceptance criterion for the end-of-run summary."""

    def _record(criterion: int, passed: bool, detail: str):
        _CRITERIA[criterion].append((bool(passed), detail))
        print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        checks = _CRITERIA[n]
        failed = [d for ok, d in checks if not ok]
        status = "PASS" if not failed else "FAIL"
        detail = f"{len(checks) - len(failed)}/{len(checks)} checks"
        if failed:
            detail += "; failing: " + " | ".join(failed)
        terminalreporter.write_line(f"criterion {n}: {status}  ({detail})")
