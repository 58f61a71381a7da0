"""Shared pytest hooks: collects acceptance check results for the summary."""

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance checks")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
