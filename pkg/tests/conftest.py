from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from splatgaze import synthetic

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"


@pytest.fixture(scope="session")
def head():
    return synthetic.head_scene()


@pytest.fixture(scope="session")
def providers():
    return synthetic.head_providers()


@pytest.fixture(scope="session")
def head_camera():
    return synthetic.head_camera(64, 64)


@pytest.fixture(scope="session")
def eyeball():
    return synthetic.eyeball_scene()


@pytest.fixture(scope="session")
def eyeball_camera():
    return synthetic.eyeball_camera(64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def head_fixture_dir():
    return FIXTURES / "head"


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
