import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from fading import ChannelProcess, schedules_for  # noqa: E402
from zpattern import decompose_period  # noqa: E402


@pytest.fixture
def example_schedules():
    """N=5 with user 2 offset by 2 slots."""
    return schedules_for(5, 2)


@pytest.fixture
def example_plan():
    return decompose_period(5, 2, 0)


@pytest.fixture
def process():
    return ChannelProcess(seed=7)
