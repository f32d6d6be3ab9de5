import pytest

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` prints and records one PASS/FAIL line."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(n, ok, detail):
        line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((n, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[_ACCEPTANCE]
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
