"""Shared fixtures: small geometries and grids."""

import numpy as np
import pytest

from ctkit.geometry import ImageGrid

from ct_factories import make_geom


@pytest.fixture
def small_geom():
    return make_geom()


@pytest.fixture
def small_grid(small_geom):
    n = 32
    return ImageGrid(n, 2.05 * small_geom.fov_radius / n)


@pytest.fixture
def tiny_geom():
    return make_geom(R=3.0, bins=16, n_angles=8)


@pytest.fixture
def tiny_grid(tiny_geom):
    n = 16
    return ImageGrid(n, 2.05 * tiny_geom.fov_radius / n)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
