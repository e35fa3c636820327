from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import settings

from deltareach.benchmarks import models_dir
from helpers import ACCEPTANCE

settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")


@pytest.fixture(scope="session")
def models() -> Path:
    return models_dir()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
