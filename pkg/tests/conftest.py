import acceptance_report


def pytest_terminal_summary(terminalreporter):
    rows = acceptance_report.lines()
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for row in rows:
        terminalreporter.write_line(row)
