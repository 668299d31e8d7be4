from __future__ import annotations

import pytest

from adsbench.routes import builtin_route


@pytest.fixture(scope="session")
def straight():
    return builtin_route("straight")


@pytest.fixture(scope="session")
def left_turn():
    return builtin_route("left_turn")


@pytest.fixture(scope="session")
def right_turn():
    return builtin_route("right_turn")
