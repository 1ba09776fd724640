import pytest

_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line; all lines are repeated in the terminal summary."""
    lines = request.config.stash[_VERDICTS]

    def record(name, ok, detail):
        # ok=None marks an informational measurement, not a criterion
        tag = "INFO" if ok is None else ("PASS" if ok else "FAIL")
        line = f"{tag} {name}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
