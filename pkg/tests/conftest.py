from collections import defaultdict

import pytest

_CRITERIA: dict[int, list[tuple[bool, str]]] = defaultdict(list)


@pytest.fixture(scope="session")
def record():
    """record(criterion, ok, detail) collects one outcome for the acceptance summary."""

    def _record(criterion: int, ok: bool, detail: str) -> bool:
        _CRITERIA[criterion].append((bool(ok), detail))
        print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        outcomes = _CRITERIA[number]
        failed = [d for ok, d in outcomes if not ok]
        status = "PASS" if not failed else "FAIL"
        detail = f"{len(outcomes) - len(failed)}/{len(outcomes)} checks"
        if failed:
            detail += "; failing: " + " | ".join(failed)
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")
