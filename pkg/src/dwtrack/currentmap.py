"""Steady-state current density in a shaped conducting track.

Solves div(sigma grad V) = 0 on the rasterized track with equipotential
contacts on the two axial end faces and insulating sidewalls, then scales
the resulting J = -sigma grad V so the end-to-end current matches the
requested total. Conductivity is an arbitrary constant; it cancels in the
normalization, so only the spatial distribution of J survives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.linalg import spsolve

from .geometry import GridSpec, Mask


@dataclass
class CurrentMap:
    """Per-cell current-density vectors [A/m^2] for a given total current."""

    jx: np.ndarray          # (nx, ny)
    jy: np.ndarray          # (nx, ny)
    total_current: float    # [A]
    grid: GridSpec
    thickness: float        # [m]
    residual: float = 0.0   # relative residual of the potential solve

    def scaled(self, factor: float) -> "CurrentMap":
        """Linear rescale; avoids re-solving inside time loops."""
        return CurrentMap(jx=self.jx * factor, jy=self.jy * factor,
                          total_current=self.total_current * factor,
                          grid=self.grid, thickness=self.thickness,
                          residual=self.residual)


def _check_connected(included: np.ndarray) -> None:
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    if ndimage.label(included, structure=structure)[1] != 1:
        raise ValueError("mask is disconnected; cannot solve for current flow")


def solve_current(mask: Mask, grid: GridSpec, thickness: float,
                  total_current: float) -> CurrentMap:
    """Potential-flow solve on the included region.

    Positive ``total_current`` flows along +x (wide end toward narrow end).
    """
    included = mask.included
    _check_connected(included)
    if not np.isfinite(total_current):
        raise ValueError("total_current must be finite")

    nx, ny = included.shape
    if total_current == 0.0:
        return CurrentMap(jx=np.zeros((nx, ny)), jy=np.zeros((nx, ny)),
                          total_current=0.0, grid=grid, thickness=thickness)

    cols = np.nonzero(included.any(axis=1))[0]
    i_left, i_right = int(cols[0]), int(cols[-1])
    if i_right - i_left < 2:
        raise ValueError("track must span at least three columns")

    idx = -np.ones((nx, ny), dtype=np.int64)
    cells = np.argwhere(included)
    idx[cells[:, 0], cells[:, 1]] = np.arange(len(cells))
    n = len(cells)

    contact = (cells[:, 0] == i_left) | (cells[:, 0] == i_right)
    v_contact = np.where(cells[:, 0] == i_left, 1.0, 0.0)

    rows, cols_a, vals = [], [], []
    rhs = np.zeros(n)
    for k, (i, j) in enumerate(cells):
        if contact[k]:
            rows.append(k)
            cols_a.append(k)
            vals.append(1.0)
            rhs[k] = v_contact[k]
            continue
        diag = 0.0
        for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            ii, jj = i + di, j + dj
            if 0 <= ii < nx and 0 <= jj < ny and idx[ii, jj] >= 0:
                rows.append(k)
                cols_a.append(idx[ii, jj])
                vals.append(1.0)
                diag -= 1.0
        rows.append(k)
        cols_a.append(k)
        vals.append(diag)
    a = sparse.csr_matrix((vals, (rows, cols_a)), shape=(n, n))
    v = spsolve(a, rhs)
    if not np.all(np.isfinite(v)):
        raise RuntimeError("potential solve failed (singular system)")
    residual = float(np.linalg.norm(a @ v - rhs) / max(np.linalg.norm(rhs), 1e-300))

    vg = np.full((nx, ny), np.nan)
    vg[included] = v
    h = grid.cell_size

    # Face fluxes, averaged per cell over the faces that exist; insulating
    # boundaries carry none, so column sums of jx conserve the end-to-end
    # current exactly.
    jx = np.zeros((nx, ny))
    jy = np.zeros((nx, ny))
    face_x = np.zeros((nx + 1, ny))  # flux from column i-1 into column i
    both_x = np.zeros((nx + 1, ny), dtype=bool)
    both_x[1:nx] = included[:-1] & included[1:]
    face_x[1:nx][both_x[1:nx]] = (vg[:-1] - vg[1:])[both_x[1:nx]] / h
    n_face_x = both_x[:nx].astype(float) + both_x[1:].astype(float)
    with np.errstate(invalid="ignore"):
        jx_avg = (face_x[:nx] + face_x[1:]) / np.maximum(n_face_x, 1.0)
    jx[included] = jx_avg[included]

    face_y = np.zeros((nx, ny + 1))
    both_y = np.zeros((nx, ny + 1), dtype=bool)
    both_y[:, 1:ny] = included[:, :-1] & included[:, 1:]
    face_y[:, 1:ny][both_y[:, 1:ny]] = (vg[:, :-1] - vg[:, 1:])[both_y[:, 1:ny]] / h
    n_face_y = both_y[:, :ny].astype(float) + both_y[:, 1:].astype(float)
    jy_avg = (face_y[:, :ny] + face_y[:, 1:]) / np.maximum(n_face_y, 1.0)
    jy[included] = jy_avg[included]

    i_mid = (i_left + i_right) // 2
    raw = float(face_x[i_mid + 1].sum() * h * thickness)
    if abs(raw) < 1e-300:
        raise RuntimeError("no current path between contacts")
    scale = total_current / raw
    return CurrentMap(jx=jx * scale, jy=jy * scale, total_current=total_current,
                      grid=grid, thickness=thickness, residual=residual)


def cross_section_current(cmap: CurrentMap, x: float) -> float:
    """Current through the included column nearest x [A]."""
    h = cmap.grid.cell_size
    i = int(np.floor(x / h))
    if not 0 <= i < cmap.grid.nx:
        raise ValueError(f"x = {x:g} m lies outside the grid")
    col = cmap.jx[i]
    active = col != 0.0
    if cmap.total_current != 0.0 and not active.any():
        raise ValueError(f"x = {x:g} m lies outside the track")
    return float(col.sum() * h * cmap.thickness)


def export_current_map_csv(cmap: CurrentMap, path: str) -> None:
    """Dump the J field for inspection: one row per cell (ix, iy, jx, jy)."""
    with open(path, "w") as f:
        f.write("# dwtrack current map v1\n")
        f.write("ix,iy,jx_A_per_m2,jy_A_per_m2\n")
        nz = np.argwhere((cmap.jx != 0) | (cmap.jy != 0))
        for i, j in nz:
            f.write(f"{i},{j},{cmap.jx[i, j]:.12g},{cmap.jy[i, j]:.12g}\n")
