import pytest

ACCEPTANCE = pytest.StashKey()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.fixture
def acceptance(request):
    """Record one verdict line per acceptance criterion, shown in the terminal summary."""
    return request.config.stash[ACCEPTANCE].__setitem__


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
