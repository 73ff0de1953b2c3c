"""Shared fixtures.

The heavy acceptance runs cache their artifacts so that re-running the
suite (or reusing another criterion's output, as the protocol round-trip
test does with the sweep data) does not repeat hours of propagation. Set
RINGBEC_TEST_CACHE to a directory to keep the cache across sessions;
otherwise a session-scoped temporary directory is used.
"""
import os

import numpy as np
import pytest

from ringbec import driver
from ringbec.fields import Grid2D


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    env = os.environ.get("RINGBEC_TEST_CACHE")
    if env:
        os.makedirs(env, exist_ok=True)
        return env
    return str(tmp_path_factory.mktemp("ringbec_cache"))


@pytest.fixture(scope="session")
def profile1():
    """Interacting l=1 radial eigenstate at the reference point R=5, g2d=1."""
    return driver.radial_profile(1, 5.0, 1.0)


@pytest.fixture(scope="session")
def profile3():
    return driver.radial_profile(3, 5.0, 1.0)


@pytest.fixture(scope="session")
def desk_setup():
    return driver.prepare_run(5.0, 1.0, preset="desk")


@pytest.fixture(scope="session")
def small_grid():
    """Coarse grid for cheap propagation checks."""
    return Grid2D(128, 128, 24.0, 24.0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260826)
