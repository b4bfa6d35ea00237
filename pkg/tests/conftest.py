import sys

import pytest
from hypothesis import settings

from evhil.grid.feeder import build_default_feeder
from evhil.grid.profiles import default_profiles

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")

@pytest.fixture(scope="session")
def feeder():
    return build_default_feeder()


@pytest.fixture(scope="session")
def profiles(feeder):
    return default_profiles(feeder)


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
