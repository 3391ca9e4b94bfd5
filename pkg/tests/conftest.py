from __future__ import annotations

import pytest

from billiards.geometry import squash_stadium, std_stadium, weak_stadium


@pytest.fixture(scope='session')
def std():
    return std_stadium(1.0, 2.0)


@pytest.fixture(scope='session')
def weak():
    return weak_stadium()


@pytest.fixture(scope='session')
def squash():
    return squash_stadium(1.0, 0.6, 2.0)
