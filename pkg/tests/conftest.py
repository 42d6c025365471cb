import pytest

from nkcs.landscape import Landscape, LandscapeSpec

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def small_landscape():
    return Landscape.from_spec(LandscapeSpec(11, (6, 5, 7), 2, 1))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
