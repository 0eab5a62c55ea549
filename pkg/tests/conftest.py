from __future__ import annotations

import pytest

_RESULTS: dict[str, tuple[bool, str]] = {}


class CriterionRecorder:
    def __call__(self, cid: str, ok: bool, detail: str) -> None:
        _RESULTS[cid] = (bool(ok), detail)
        assert ok, f"criterion {cid}: {detail}"


@pytest.fixture
def criterion() -> CriterionRecorder:
    return CriterionRecorder()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_RESULTS, key=lambda c: int(c.split(".")[0])):
        ok, detail = _RESULTS[cid]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {cid}: {detail}")
