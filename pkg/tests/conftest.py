"""Shared fixtures: small grids and seeded generators."""

import numpy as np
import pytest

from ansflow import GridSpec


@pytest.fixture
def grid8():
    return GridSpec(8, 8)


@pytest.fixture
def grid16():
    return GridSpec(16, 16)


@pytest.fixture
def grid32():
    return GridSpec(32, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
