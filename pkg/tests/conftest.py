# acceptance tests append (criterion, verdict, detail); printed after the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {number} {name}: {'PASS' if ok else 'FAIL'} ({detail})")
