import pytest

from hypothesis import settings

settings.register_profile("fast", max_examples=25, deadline=None)
settings.load_profile("fast")

SUMMARY = []


@pytest.fixture
def record_summary():
    return SUMMARY.append


def pytest_terminal_summary(terminalreporter):
    if SUMMARY:
        terminalreporter.section("acceptance summary")
        for line in sorted(SUMMARY, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
