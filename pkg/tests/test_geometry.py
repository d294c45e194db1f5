import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage, optimize

from dwtrack import geometry
from dwtrack.geometry import (GridSpec, ShapeKind, log_width_gradient,
                              make_track_shape, mask_to_text, rasterize,
                              width_at)

NM = 1e-9


class TestMakeTrackShape:
    def test_exponential_b1_degenerates_to_trapezoid(self):
        exp = make_track_shape("exponential", b=1.0)
        trap = make_track_shape("trapezoid")
        d = np.linspace(0, exp.length, 301)
        np.testing.assert_allclose(width_at(exp, d), width_at(trap, d),
                                   rtol=1e-14)

    def test_constricted_w1_100nm_is_valid(self):
        sh = make_track_shape("constricted", w1=100 * NM)
        assert sh.w_wide == 100 * NM
        assert sh.constriction_width == pytest.approx(50 * NM)

    def test_b_below_one_rejected(self):
        with pytest.raises(ValueError, match="b must be >= 1"):
            make_track_shape("exponential", b=0.5)

    @pytest.mark.parametrize("kwargs", [
        dict(length=-1e-6), dict(w_wide=0.0), dict(w_narrow=-1 * NM),
        dict(thickness=0.0),
        dict(w_wide=100 * NM, w_narrow=200 * NM),
    ])
    def test_invalid_dimensions_rejected(self, kwargs):
        with pytest.raises(ValueError):
            make_track_shape("trapezoid", **kwargs)

    def test_constriction_wider_than_w1_rejected(self):
        with pytest.raises(ValueError, match="constriction_width"):
            make_track_shape("constricted", w1=100 * NM,
                             constriction_width=200 * NM)


class TestWidthAt:
    @pytest.mark.parametrize("kind,kwargs", [
        ("trapezoid", {}),
        ("exponential", dict(b=2.0)),
        ("exponential", dict(b=5.0)),
    ])
    def test_boundary_widths_exact(self, kind, kwargs):
        sh = make_track_shape(kind, **kwargs)
        assert width_at(sh, 0.0) == pytest.approx(sh.w_wide, abs=0)
        assert width_at(sh, sh.length) == pytest.approx(sh.w_narrow, rel=1e-14)

    def test_constricted_boundaries(self):
        sh = make_track_shape("constricted", w1=200 * NM)
        assert width_at(sh, 0.0) == pytest.approx(200 * NM)
        assert width_at(sh, sh.length) == pytest.approx(sh.constriction_width)

    def test_exponential_b4_midpoint_closed_form(self):
        # independent oracle: solve w(d) = c1*b**(-d/L) + c0 for the two
        # constants from the boundary conditions, then evaluate at L/2
        sh = make_track_shape("exponential", b=4.0)
        a = np.array([[1.0, 1.0], [1.0 / sh.b, 1.0]])
        c1, c0 = np.linalg.solve(a, [sh.w_wide, sh.w_narrow])
        expected = c1 * sh.b ** (-0.5) + c0
        assert expected == pytest.approx(200 * NM, rel=1e-12)
        assert width_at(sh, sh.length / 2) == pytest.approx(expected, rel=1e-12)

    def test_exponential_midpoint_against_root_solve(self):
        # second oracle: recover the exponent scale by root finding on the
        # boundary residual rather than linear algebra
        sh = make_track_shape("exponential", b=3.0)

        def resid(c0):
            c1 = sh.w_wide - c0
            return c1 / sh.b + c0 - sh.w_narrow

        c0 = optimize.brentq(resid, -sh.w_wide, sh.w_wide)
        c1 = sh.w_wide - c0
        d = 0.37 * sh.length
        expected = c1 * sh.b ** (-d / sh.length) + c0
        assert width_at(sh, d) == pytest.approx(expected, rel=1e-12)

    def test_monotone_nonincreasing_and_continuous(self):
        for sh in (make_track_shape("trapezoid"),
                   make_track_shape("exponential", b=3.5),
                   make_track_shape("constricted", w1=300 * NM)):
            d = np.linspace(0, sh.length, 2001)
            w = width_at(sh, d)
            assert np.all(np.diff(w) <= 1e-18)
            assert np.max(np.abs(np.diff(w))) < 5 * NM  # no jumps at this sampling

    def test_exponential_convex_for_b_above_one(self):
        sh = make_track_shape("exponential", b=2.5)
        d = np.linspace(0.05 * sh.length, 0.95 * sh.length, 200)
        h = 1e-10
        second = (width_at(sh, d + h) - 2 * width_at(sh, d)
                  + width_at(sh, d - h)) / h**2
        assert np.all(second > 0)

    def test_out_of_range_rejected(self):
        sh = make_track_shape("trapezoid")
        with pytest.raises(ValueError):
            width_at(sh, -1 * NM)
        with pytest.raises(ValueError):
            width_at(sh, sh.length * 1.01)

    @given(w_narrow=st.floats(20e-9, 200e-9), ratio=st.floats(1.0, 6.0),
           b=st.floats(1.0, 5.0), frac=st.floats(0.0, 1.0))
    @settings(max_examples=60, deadline=None)
    def test_width_bounded_by_end_widths(self, w_narrow, ratio, b, frac):
        sh = make_track_shape("exponential", b=b, w_wide=w_narrow * ratio,
                              w_narrow=w_narrow)
        w = width_at(sh, frac * sh.length)
        assert sh.w_narrow - 1e-15 <= w <= sh.w_wide + 1e-15


class TestRasterize:
    def test_exact_fit_rectangle_fully_included(self):
        sh = make_track_shape("trapezoid", length=400e-9, w_wide=100e-9,
                              w_narrow=100e-9)
        grid = GridSpec(cell_size=5e-9, nx=80, ny=20)
        mask = rasterize(sh, grid, 20e-9)
        assert mask.included.all()

    def test_too_narrow_throat_raises_disconnection(self):
        sh = make_track_shape("constricted", w1=100 * NM,
                              constriction_width=4 * NM)
        grid = geometry.default_grid(sh, 10e-9)
        with pytest.raises(ValueError, match="throat"):
            rasterize(sh, grid, 40e-9)

    def test_trapezoid_cell_count_matches_area(self):
        sh = make_track_shape("trapezoid")  # 1000 x (400 -> 100) nm
        grid = geometry.default_grid(sh, 5e-9)
        mask = rasterize(sh, grid, 40e-9)
        area = 0.5 * (sh.w_wide + sh.w_narrow) * sh.length
        expect = area / grid.cell_size**2
        assert mask.n_included == pytest.approx(expect, rel=0.02)

    def test_area_error_shrinks_with_resolution(self):
        sh = make_track_shape("exponential", b=3.0)
        area = np.trapezoid(width_at(sh, np.linspace(0, sh.length, 20001)),
                            dx=sh.length / 20000)
        errs = []
        for cell in (10e-9, 5e-9):
            grid = geometry.default_grid(sh, cell)
            mask = rasterize(sh, grid, 40e-9)
            errs.append(abs(mask.n_included * cell**2 - area) / area)
        assert errs[1] < errs[0]

    def test_midline_symmetry(self):
        for kind, kw in (("trapezoid", {}), ("constricted", dict(w1=250 * NM))):
            sh = make_track_shape(kind, **kw)
            grid = geometry.default_grid(sh, 5e-9)
            mask = rasterize(sh, grid, 40e-9)
            assert np.array_equal(mask.included, mask.included[:, ::-1])

    def test_connectivity_and_fixed_flags(self):
        sh = make_track_shape("constricted", w1=150 * NM)
        grid = geometry.default_grid(sh, 5e-9)
        mask = rasterize(sh, grid, 40e-9)
        four = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
        assert ndimage.label(mask.included, structure=four)[1] == 1
        assert not (mask.fixed & ~mask.included).any()
        xc = grid.x_centers()
        fixed_cols = np.nonzero(mask.fixed.any(axis=1))[0]
        assert np.all((xc[fixed_cols] < 40e-9)
                      | (xc[fixed_cols] > sh.length - 40e-9))

    def test_grid_too_small_rejected(self):
        sh = make_track_shape("trapezoid")
        with pytest.raises(ValueError, match="grid too small"):
            rasterize(sh, GridSpec(cell_size=5e-9, nx=100, ny=80), 40e-9)

    def test_fixed_margin_bound(self):
        sh = make_track_shape("trapezoid")
        grid = geometry.default_grid(sh, 5e-9)
        with pytest.raises(ValueError, match="fixed_margin"):
            rasterize(sh, grid, sh.length / 3)

    def test_mask_text_render(self):
        sh = make_track_shape("trapezoid", length=100e-9, w_wide=40e-9,
                              w_narrow=20e-9)
        grid = geometry.default_grid(sh, 10e-9)
        text = mask_to_text(rasterize(sh, grid, 20e-9))
        assert set(text) <= set("#F.\n")
        assert "F" in text and "#" in text


class TestLogWidthGradient:
    def test_constant_profile_gives_exact_zero(self):
        g = log_width_gradient(np.full(200, 100e-9), 5e-9, 150e-9)
        assert np.all(g == 0.0)

    def test_pure_exponential_gradient_constant_interior(self):
        h = 5e-9
        x = np.arange(400) * h
        w = 400e-9 * np.exp(-x / 800e-9)
        g = log_width_gradient(w, h, 100e-9)
        interior = g[120:280]
        assert np.allclose(interior, -1 / 800e-9, rtol=1e-6)

    def test_nonpositive_width_rejected(self):
        with pytest.raises(ValueError):
            log_width_gradient(np.array([1e-9, 0.0]), 5e-9, 0.0)
