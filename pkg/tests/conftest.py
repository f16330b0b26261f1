import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("suite", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")

_ACCEPTANCE = []


@pytest.fixture
def verdict_line():
    """Record one acceptance line; printed again in the terminal summary."""

    def record(number, title, passed, detail=""):
        line = f"[criterion {number:>2}] {'PASS' if passed else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
        _ACCEPTANCE.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
