import support  # noqa: F401  registers the hypothesis profile


def pytest_terminal_summary(terminalreporter):
    if support.ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(support.ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
