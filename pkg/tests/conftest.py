import numpy as np
import pytest

from dwtrack import geometry, llg


@pytest.fixture(scope="session")
def params():
    return llg.MaterialParams()


@pytest.fixture(scope="session")
def small_trapezoid():
    """600 nm track; small enough for fast full-grid runs at 5 nm cells."""
    return geometry.make_track_shape("trapezoid", length=600e-9,
                                     w_wide=240e-9, w_narrow=60e-9)


@pytest.fixture(scope="session")
def small_rectangle():
    return geometry.make_track_shape("trapezoid", length=600e-9,
                                     w_wide=200e-9, w_narrow=200e-9)


def rasterized(shape, cell=5e-9, margin=30e-9):
    grid = geometry.default_grid(shape, cell)
    return grid, geometry.rasterize(shape, grid, margin)


@pytest.fixture(scope="session")
def relaxed_rect_wall(small_rectangle, params):
    grid, mask = rasterized(small_rectangle)
    state = llg.init_domain_wall(mask, grid, params, 300e-9,
                                 small_rectangle.thickness)
    return state


def rng(seed=0):
    return np.random.default_rng(seed)
