"""Parametric domain-wall track outlines and their rasterization.

A track is described along its drift axis x, with x = 0 at the wide
(low-energy) end. Three families are supported:

* ``trapezoid``    - straight sidewalls, linear width taper.
* ``exponential``  - width of the form c1 * b**(-x/L) + c0, pinned to the
  end widths; b = 1 degenerates exactly to the trapezoid.
* ``constricted``  - two constant-width plateaus joined by a sharp cosine
  taper centered on the track: w1 on the wide half, dropping to the
  constriction width on the narrow half. Confines the width gradient to
  the middle of the track.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage


class ShapeKind(enum.Enum):
    TRAPEZOID = "trapezoid"
    EXPONENTIAL = "exponential"
    CONSTRICTED = "constricted"


# Default dimensions; the w1 sweep range (100-400 nm) sets the scale.
DEFAULT_LENGTH = 1000e-9
DEFAULT_W_WIDE = 400e-9
DEFAULT_W_NARROW = 100e-9
DEFAULT_THICKNESS = 1.5e-9
DEFAULT_CONSTRICTION_WIDTH = 50e-9
DEFAULT_CONSTRICTION_EXTENT = 200e-9
DEFAULT_FIXED_MARGIN = 40e-9
DEFAULT_CELL_SIZE = 5e-9


@dataclass(frozen=True)
class TrackShape:
    """Validated parametric track outline. Build via :func:`make_track_shape`."""

    kind: ShapeKind
    length: float
    w_wide: float
    w_narrow: float
    thickness: float
    b: float = 1.0
    w1: float = 0.0
    constriction_width: float = 0.0
    constriction_extent: float = 0.0

    def label(self) -> str:
        if self.kind is ShapeKind.EXPONENTIAL:
            return f"exponential_b{self.b:g}"
        if self.kind is ShapeKind.CONSTRICTED:
            return f"constricted_w1_{self.w1 * 1e9:g}nm"
        return "trapezoid"


@dataclass(frozen=True)
class GridSpec:
    """Uniform simulation grid; cell centers at ((i+1/2)h, (j+1/2)h)."""

    cell_size: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid dimensions must be at least 1")

    def x_centers(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.cell_size

    def y_centers(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.cell_size


@dataclass
class Mask:
    """Rasterized track: per-cell inclusion and pinned end-region flags."""

    included: np.ndarray  # (nx, ny) bool
    fixed: np.ndarray     # (nx, ny) bool, subset of included

    @property
    def n_included(self) -> int:
        return int(self.included.sum())

    def column_counts(self) -> np.ndarray:
        """Included cells per x-column; proportional to the local width."""
        return self.included.sum(axis=1)


def make_track_shape(kind: ShapeKind | str, *, length: float = DEFAULT_LENGTH,
                     w_wide: float = DEFAULT_W_WIDE,
                     w_narrow: float = DEFAULT_W_NARROW,
                     thickness: float = DEFAULT_THICKNESS,
                     b: float = 1.0,
                     w1: float | None = None,
                     constriction_width: float = DEFAULT_CONSTRICTION_WIDTH,
                     constriction_extent: float = DEFAULT_CONSTRICTION_EXTENT) -> TrackShape:
    """Validate parameters and return a TrackShape.

    For the constricted kind, w1 is the plateau width of the wide half and
    ``constriction_width`` that of the narrow half; they take the roles of
    w_wide / w_narrow.
    """
    kind = ShapeKind(kind) if not isinstance(kind, ShapeKind) else kind
    if length <= 0:
        raise ValueError("length must be positive")
    if thickness <= 0:
        raise ValueError("thickness must be positive")

    if kind is ShapeKind.CONSTRICTED:
        if w1 is None:
            w1 = DEFAULT_W_WIDE
        if w1 <= 0 or constriction_width <= 0:
            raise ValueError("w1 and constriction_width must be positive")
        if constriction_width > w1:
            raise ValueError("constriction_width must not exceed w1")
        if not 0 < constriction_extent < length:
            raise ValueError("constriction_extent must lie in (0, length)")
        return TrackShape(kind=kind, length=length, w_wide=w1,
                          w_narrow=constriction_width, thickness=thickness,
                          w1=w1, constriction_width=constriction_width,
                          constriction_extent=constriction_extent)

    if w_wide <= 0 or w_narrow <= 0:
        raise ValueError("track widths must be positive")
    if w_wide < w_narrow:
        raise ValueError("w_wide must be >= w_narrow (leak points to the wide end)")
    if kind is ShapeKind.EXPONENTIAL and b < 1:
        raise ValueError("b must be >= 1 (b below 1 inverts the energy landscape)")
    return TrackShape(kind=kind, length=length, w_wide=w_wide,
                      w_narrow=w_narrow, thickness=thickness, b=b)


def width_at(shape: TrackShape, d) -> float | np.ndarray:
    """Track width at distance d from the wide end. Accepts scalars or arrays.

    Exponential profile: w(d) = c1 * b**(-d/L) + c0 with the two constants
    pinned by w(0) = w_wide and w(L) = w_narrow; evaluated in the
    cancellation-safe form w_wide + (w_narrow - w_wide) * f(d/L) with
    f(u) = expm1(-u ln b) / expm1(-ln b), whose b -> 1 limit is u.
    """
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr < -1e-15) or np.any(d_arr > shape.length * (1 + 1e-12)):
        raise ValueError(f"d must lie within [0, {shape.length:g}] m")
    u = np.clip(d_arr / shape.length, 0.0, 1.0)

    if shape.kind is ShapeKind.TRAPEZOID:
        w = shape.w_wide + (shape.w_narrow - shape.w_wide) * u
    elif shape.kind is ShapeKind.EXPONENTIAL:
        ln_b = math.log(shape.b)
        if abs(ln_b) < 1e-12:
            frac = u
        else:
            frac = np.expm1(-u * ln_b) / math.expm1(-ln_b)
        w = shape.w_wide + (shape.w_narrow - shape.w_wide) * frac
    else:
        lo = 0.5 * (shape.length - shape.constriction_extent)
        hi = 0.5 * (shape.length + shape.constriction_extent)
        x = u * shape.length
        s = np.clip((x - lo) / shape.constriction_extent, 0.0, 1.0)
        ramp = 0.5 * (1.0 + np.cos(np.pi * s))  # C1 monotone, 1 -> 0
        w = shape.constriction_width + (shape.w1 - shape.constriction_width) * ramp

    if np.isscalar(d) or d_arr.ndim == 0:
        return float(w)
    return w


def default_grid(shape: TrackShape, cell_size: float = DEFAULT_CELL_SIZE) -> GridSpec:
    """Smallest grid whose extent covers the shape at the given resolution."""
    nx = int(math.ceil(shape.length / cell_size - 1e-9))
    ny = int(math.ceil(shape.w_wide / cell_size - 1e-9))
    return GridSpec(cell_size=cell_size, nx=nx, ny=ny)


def rasterize(shape: TrackShape, grid: GridSpec,
              fixed_margin: float = DEFAULT_FIXED_MARGIN) -> Mask:
    """Rasterize the outline: a cell is included iff its center lies inside.

    Included cells within ``fixed_margin`` of either axial end are flagged
    fixed (pinned end domains).
    """
    if grid.nx * grid.cell_size < shape.length - 1e-15:
        raise ValueError("grid too small along x for this shape")
    if grid.ny * grid.cell_size < shape.w_wide - 1e-15:
        raise ValueError("grid too small along y for this shape")
    if not fixed_margin < shape.length / 4:
        raise ValueError("fixed_margin must be smaller than length/4")

    xc = grid.x_centers()
    yc = grid.y_centers()
    y_mid = 0.5 * grid.ny * grid.cell_size

    in_x = xc <= shape.length
    half_w = np.zeros_like(xc)
    half_w[in_x] = 0.5 * width_at(shape, xc[in_x])
    included = in_x[:, None] & (np.abs(yc[None, :] - y_mid) <= half_w[:, None])

    if not included.any():
        raise ValueError("rasterization produced an empty mask")
    hint = ""
    if shape.kind is ShapeKind.CONSTRICTED:
        hint = (f" (constriction throat {shape.constriction_width * 1e9:.0f} nm"
                f" is too narrow for {grid.cell_size * 1e9:.0f} nm cells)")
    n_comp = ndimage.label(included, structure=np.array([[0, 1, 0],
                                                         [1, 1, 1],
                                                         [0, 1, 0]]))[1]
    if n_comp != 1:
        raise ValueError(f"rasterized region is disconnected{hint}")
    if not included[in_x].any(axis=1).all():
        raise ValueError(f"rasterized region has empty columns{hint}")

    near_end = (xc < fixed_margin) | (xc > shape.length - fixed_margin)
    fixed = included & near_end[:, None]
    return Mask(included=included, fixed=fixed)


def mask_to_text(mask: Mask) -> str:
    """Portable text rendering: one row per y, '#' included, 'F' fixed."""
    rows = []
    for j in range(mask.included.shape[1] - 1, -1, -1):
        row = "".join("F" if mask.fixed[i, j] else "#" if mask.included[i, j] else "."
                      for i in range(mask.included.shape[0]))
        rows.append(row)
    return "\n".join(rows) + "\n"


def log_width_gradient(widths: np.ndarray, cell_size: float,
                       smooth_range: float) -> np.ndarray:
    """d/dx ln(w) of a width profile, smoothed over ``smooth_range``.

    The smoothing stands in for the long range of the magnetostatic
    interaction: the pull of a width step is felt well before a wall
    reaches it. Constant profiles map to exactly zero.
    """
    w = np.asarray(widths, dtype=float)
    if np.any(w <= 0):
        raise ValueError("width profile must be positive where evaluated")
    logw = np.log(w)
    if smooth_range > 0:
        logw = ndimage.gaussian_filter1d(logw, sigma=smooth_range / cell_size,
                                         mode="nearest")
    return np.gradient(logw, cell_size)
