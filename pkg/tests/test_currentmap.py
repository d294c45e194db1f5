import numpy as np
import pytest

from dwtrack import geometry
from dwtrack.currentmap import (cross_section_current, export_current_map_csv,
                                solve_current)
from dwtrack.geometry import Mask, make_track_shape, rasterize

NM = 1e-9
T = 1.5e-9


def setup(shape, cell=5e-9):
    grid = geometry.default_grid(shape, cell)
    return grid, rasterize(shape, grid, 40e-9)


@pytest.fixture(scope="module")
def rect_map():
    sh = make_track_shape("trapezoid", length=600 * NM, w_wide=200 * NM,
                          w_narrow=200 * NM)
    grid, mask = setup(sh)
    return sh, grid, mask, solve_current(mask, grid, T, 1e-4)


@pytest.fixture(scope="module")
def trap_map():
    sh = make_track_shape("trapezoid")
    grid, mask = setup(sh)
    return sh, grid, mask, solve_current(mask, grid, T, 1e-4)


class TestSolveCurrent:
    def test_rectangle_uniform_density(self, rect_map):
        sh, grid, mask, cmap = rect_map
        expected = 1e-4 / (sh.w_wide * T)
        jx = cmap.jx[mask.included]
        assert np.abs(jx - expected).max() / expected < 1e-3
        assert np.abs(cmap.jy[mask.included]).max() / expected < 1e-3

    def test_trapezoid_cross_section_density(self):
        # away from the contacts, mean |J| over a column matches the 1D
        # flux estimate I / (w(x) t); fine cells keep the one-cell
        # rasterization rounding below the tolerance
        sh = make_track_shape("trapezoid")
        grid, mask = setup(sh, cell=2.5e-9)
        cmap = solve_current(mask, grid, T, 1e-4)
        for frac in (0.25, 0.5, 0.75):
            i = int(frac * sh.length / grid.cell_size)
            x_col = (i + 0.5) * grid.cell_size
            inc = mask.included[i]
            j_mean = np.abs(cmap.jx[i][inc]).mean()
            expected = 1e-4 / (geometry.width_at(sh, x_col) * T)
            assert j_mean == pytest.approx(expected, rel=0.02)

    def test_zero_current_zero_map(self, rect_map):
        _, grid, mask, _ = rect_map
        cmap = solve_current(mask, grid, T, 0.0)
        assert not cmap.jx.any() and not cmap.jy.any()

    def test_linearity_in_current(self, trap_map):
        _, grid, mask, cmap = trap_map
        doubled = solve_current(mask, grid, T, 2e-4)
        np.testing.assert_allclose(doubled.jx, 2 * cmap.jx, rtol=1e-9,
                                   atol=1e-3)
        scaled = cmap.scaled(2.0)
        np.testing.assert_allclose(scaled.jx, doubled.jx, rtol=1e-9, atol=1e-3)

    def test_mirror_symmetry(self, trap_map):
        _, grid, mask, cmap = trap_map
        scale = np.abs(cmap.jx).max()
        assert np.abs(cmap.jx - cmap.jx[:, ::-1]).max() / scale < 1e-6
        assert np.abs(cmap.jy + cmap.jy[:, ::-1]).max() / scale < 1e-6

    def test_disconnected_mask_rejected(self):
        included = np.zeros((10, 5), dtype=bool)
        included[:4] = True
        included[6:] = True
        mask = Mask(included=included, fixed=np.zeros_like(included))
        with pytest.raises(ValueError, match="disconnected"):
            solve_current(mask, geometry.GridSpec(5e-9, 10, 5), T, 1e-4)

    def test_conservation_every_interior_column(self, trap_map):
        # the integrated form of discrete charge conservation: the current
        # through every interior cross-section equals the injected total
        sh, grid, mask, cmap = trap_map
        h = grid.cell_size
        for i in range(2, grid.nx - 2):
            x = (i + 0.5) * h
            assert cross_section_current(cmap, x) == pytest.approx(1e-4,
                                                                   rel=1e-3)


class TestCrossSectionCurrent:
    def test_rectangle_conservation(self, rect_map):
        sh, grid, mask, cmap = rect_map
        for x in (100 * NM, 300 * NM, 500 * NM):
            assert cross_section_current(cmap, x) == pytest.approx(1e-4,
                                                                   rel=1e-3)

    def test_trapezoid_quarter_points_agree(self, trap_map):
        sh, _, _, cmap = trap_map
        i1 = cross_section_current(cmap, 0.25 * sh.length)
        i2 = cross_section_current(cmap, 0.75 * sh.length)
        assert i1 == pytest.approx(i2, rel=1e-3)
        assert i1 == pytest.approx(1e-4, rel=1e-3)

    def test_zero_map_zero_current(self, rect_map):
        _, grid, mask, _ = rect_map
        cmap = solve_current(mask, grid, T, 0.0)
        assert cross_section_current(cmap, 300 * NM) == 0.0

    def test_outside_grid_rejected(self, rect_map):
        _, _, _, cmap = rect_map
        with pytest.raises(ValueError):
            cross_section_current(cmap, 1e-5)


def test_csv_export(tmp_path, rect_map):
    _, _, _, cmap = rect_map
    path = tmp_path / "j.csv"
    export_current_map_csv(cmap, str(path))
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# dwtrack current map")
    assert len(lines) > 100
