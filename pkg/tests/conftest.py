"""Collects acceptance verdicts and prints one PASS/FAIL line per criterion."""

from __future__ import annotations

import pytest

VERDICTS: dict[str, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def verdict():
    def record(criterion: str, part: str, ok: bool, detail: str = "") -> bool:
        VERDICTS.setdefault(criterion, []).append((part, bool(ok), detail))
        line = f"{criterion} {part}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(VERDICTS):
        parts = VERDICTS[criterion]
        ok = all(p[1] for p in parts)
        terminalreporter.write_line(f"{criterion}: {'PASS' if ok else 'FAIL'}")
        for part, good, detail in parts:
            terminalreporter.write_line(f"    {part}: {'PASS' if good else 'FAIL'}" + (f" ({detail})" if detail else ""))
