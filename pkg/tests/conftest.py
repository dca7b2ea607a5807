import numpy as np
import pytest
from hypothesis import settings

from cfm3d.presets import NAMES, published_model

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture(params=NAMES)
def published(request):
    return published_model(request.param)


@pytest.fixture
def ur10e():
    return published_model("ur10e")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
