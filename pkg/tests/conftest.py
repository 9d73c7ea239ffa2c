import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE: dict[int, list[str]] = {}


@pytest.fixture
def acceptance():
    """Record a pass/fail line for one acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE.setdefault(number, []).append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        for line in ACCEPTANCE[number]:
            terminalreporter.write_line(line)
