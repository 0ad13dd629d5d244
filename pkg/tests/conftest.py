"""Shared test plumbing: surface the acceptance verdict lines.

pytest captures stdout of passing tests, so the per-criterion pass/fail
lines from test_acceptance.py are collected here and echoed in the terminal
summary where they are always visible.
"""

VERDICTS: list[str] = []


def record_verdict(line: str) -> None:
    VERDICTS.append(line)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS):
            terminalreporter.write_line(line)
