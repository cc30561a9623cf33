ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    # repeat the acceptance lines, which output capture would otherwise hide
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
