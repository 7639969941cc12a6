import numpy as np
import pytest

from eventviews import EventStream


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def three_events():
    # (x=1,y=2,t=0,+), (x=7,y=2,t=0,-), (x=4,y=2,t=99,+) on a 10x4 sensor
    return EventStream([1, 7, 4], [2, 2, 2], [0, 0, 99], [1, -1, 1], 10, 4)
