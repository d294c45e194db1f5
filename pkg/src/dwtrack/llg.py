"""Landau-Lifshitz-Gilbert dynamics with Zhang-Li spin-transfer torque.

The magnetization lives on the included cells of a rasterized track
(one cell through the thickness). The effective field combines

* exchange, 2 A / (mu0 Ms) * laplacian(m), 5-point stencil with Neumann
  boundaries at the mask edge;
* perpendicular anisotropy with the thin-film demagnetization correction
  folded in: k_eff = ku1 - mu0 Ms^2 / 2, so uniform +/-z states are the
  zero-energy ground states and the wall width is sqrt(a_ex / k_eff);
* a width-gradient drift field along z. The local k_eff treatment drops
  the nonlocal magnetostatics that favor walls sitting in wide track
  sections; this term restores that preference explicitly. It is a small
  Zeeman-like field proportional to the smoothed d/dx ln(width) derived
  from the mask itself, so it vanishes identically on straight tracks,
  and it enters the total energy, which keeps the zero-current dynamics
  strictly dissipative.

Torque (explicit Landau-Lifshitz form, gamma' = gamma / (1 + alpha^2)):

    dm/dt = -gamma' m x H - gamma' alpha m x (m x H)
            - (u . grad) m + xi m x ((u . grad) m)

with u = J P mu_B / (e Ms (1 + xi^2)). u points along the conventional
current density, so positive drive pushes the wall toward the narrow end.
Time integration is an embedded Dormand-Prince RK45 with an absolute
per-step error bound on m; m is renormalized after every accepted step
and fixed cells are restored bitwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .constants import GAMMA_E, MU0, MU_B, QE
from .currentmap import CurrentMap
from .geometry import GridSpec, Mask, log_width_gradient


@dataclass(frozen=True)
class MaterialParams:
    """Micromagnetic constants (CoFeB-like defaults) plus model knobs."""

    a_ex: float = 13e-12        # exchange stiffness [J/m]
    alpha: float = 0.05         # Gilbert damping
    xi: float = 0.05            # STT non-adiabaticity
    m_sat: float = 7.958e5      # saturation magnetization [A/m]
    ku1: float = 5e5            # uniaxial anisotropy, easy axis z [J/m^3]
    polarization: float = 0.7   # spin polarization P
    gamma: float = GAMMA_E      # gyromagnetic ratio [rad/(s*T)]
    # Width-gradient drift field: B = cap * tanh(coupling * dln(w)/dx / cap).
    drift_coupling: float = 3.3e-8   # [T*m]
    drift_range: float = 150e-9      # smoothing range of the gradient [m]
    drift_cap: float = 0.08          # saturation field [T]

    def __post_init__(self):
        for name in ("a_ex", "m_sat", "ku1", "gamma"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("alpha", "xi", "polarization"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.k_eff <= 0:
            raise ValueError("ku1 - mu0*m_sat^2/2 must stay positive "
                             "(perpendicular easy axis lost)")
        if self.drift_coupling < 0 or self.drift_range < 0 or self.drift_cap <= 0:
            raise ValueError("drift parameters must be non-negative (cap positive)")

    @property
    def k_eff(self) -> float:
        return self.ku1 - 0.5 * MU0 * self.m_sat**2

    @property
    def wall_delta(self) -> float:
        """Bloch wall width parameter sqrt(A / k_eff) [m]."""
        return math.sqrt(self.a_ex / self.k_eff)

    @property
    def wall_energy_density(self) -> float:
        """Wall energy per unit wall area, 4 sqrt(A k_eff) [J/m^2]."""
        return 4.0 * math.sqrt(self.a_ex * self.k_eff)

    @property
    def stt_prefactor(self) -> float:
        """u / J [m^3/C]: P mu_B / (e Ms (1 + xi^2))."""
        return self.polarization * MU_B / (QE * self.m_sat * (1.0 + self.xi**2))

    def exchange_length(self) -> float:
        return math.sqrt(2.0 * self.a_ex / (MU0 * self.m_sat**2))


@dataclass
class MagState:
    """Unit magnetization over the included cells, packed to (N, 3)."""

    m: np.ndarray          # (N, 3) float64
    mask: Mask
    grid: GridSpec
    thickness: float
    sim_time: float = 0.0
    # topology, built once from the mask
    ix: np.ndarray = None          # (N,) column index
    iy: np.ndarray = None
    nb: np.ndarray = None          # (N, 4) neighbor cell index, -1 absent
    fixed_cells: np.ndarray = None  # (N,) bool
    m_fixed: np.ndarray = None      # pinned values of fixed cells
    _drift_memo: dict = field(default_factory=dict, repr=False)

    @property
    def n_cells(self) -> int:
        return self.m.shape[0]

    def column_mz(self) -> tuple[np.ndarray, np.ndarray]:
        """(column indices with cells, mean mz per such column)."""
        nx = self.grid.nx
        counts = np.bincount(self.ix, minlength=nx)
        sums = np.bincount(self.ix, weights=self.m[:, 2], minlength=nx)
        cols = np.nonzero(counts)[0]
        return cols, sums[cols] / counts[cols]

    def to_grid(self) -> np.ndarray:
        """Unpack to an (nx, ny, 3) array, zeros outside the track."""
        out = np.zeros((self.grid.nx, self.grid.ny, 3))
        out[self.ix, self.iy] = self.m
        return out

    def mean_mz(self) -> float:
        return float(self.m[:, 2].mean())

    def clone(self) -> "MagState":
        return replace(self, m=self.m.copy(), _drift_memo=dict(self._drift_memo))


@dataclass(frozen=True)
class DriveSpec:
    """Current drive: a solved unit map plus a linear scale factor."""

    current_map: CurrentMap
    current_scale: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.current_scale):
            raise ValueError("current_scale must be finite")


class NonFiniteStateError(RuntimeError):
    """Integration produced a non-finite magnetization component."""

    def __init__(self, cell: int, t: float):
        super().__init__(f"non-finite magnetization at cell {cell}, t = {t:.3e} s")
        self.cell = cell
        self.t = t


def make_state(mask: Mask, grid: GridSpec, thickness: float,
               m_grid: np.ndarray) -> MagState:
    """Pack an (nx, ny, 3) field into a MagState with neighbor topology."""
    included = mask.included
    cells = np.argwhere(included)
    n = len(cells)
    idx = -np.ones(included.shape, dtype=np.int64)
    idx[cells[:, 0], cells[:, 1]] = np.arange(n)

    nb = -np.ones((n, 4), dtype=np.int64)
    nx, ny = included.shape
    for k, (di, dj) in enumerate(((-1, 0), (1, 0), (0, -1), (0, 1))):
        ii = cells[:, 0] + di
        jj = cells[:, 1] + dj
        ok = (ii >= 0) & (ii < nx) & (jj >= 0) & (jj < ny)
        nb[ok, k] = idx[ii[ok], jj[ok]]

    m = np.ascontiguousarray(m_grid[cells[:, 0], cells[:, 1]], dtype=np.float64)
    fixed_cells = mask.fixed[cells[:, 0], cells[:, 1]]
    return MagState(m=m, mask=mask, grid=grid, thickness=thickness,
                    ix=cells[:, 0].copy(), iy=cells[:, 1].copy(), nb=nb,
                    fixed_cells=fixed_cells, m_fixed=m[fixed_cells].copy())


def _drift_field(state: MagState, params: MaterialParams) -> np.ndarray:
    """Per-cell z drift field [A/m] from the mask's smoothed width profile."""
    key = (params.drift_coupling, params.drift_range, params.drift_cap)
    cached = state._drift_memo.get(key)
    if cached is not None:
        return cached
    n = state.n_cells
    if params.drift_coupling == 0.0:
        h_cells = np.zeros(n)
    else:
        counts = state.mask.column_counts()
        cols = np.nonzero(counts)[0]
        widths = counts[cols] * state.grid.cell_size
        grad = log_width_gradient(widths, state.grid.cell_size, params.drift_range)
        b = params.drift_cap * np.tanh(params.drift_coupling * grad / params.drift_cap)
        b_col = np.zeros(state.grid.nx)
        b_col[cols] = b
        h_cells = b_col[state.ix] / MU0
    state._drift_memo[key] = h_cells
    return h_cells


# ---------------------------------------------------------------------------
# numba kernels (serial loops: bit-reproducible run to run)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _field_kernel(m, nb, drift_h, c_ex, c_an, out):
    n = m.shape[0]
    for i in range(n):
        hx = 0.0
        hy = 0.0
        hz = 0.0
        for k in range(4):
            j = nb[i, k]
            if j >= 0:
                hx += m[j, 0] - m[i, 0]
                hy += m[j, 1] - m[i, 1]
                hz += m[j, 2] - m[i, 2]
        out[i, 0] = c_ex * hx
        out[i, 1] = c_ex * hy
        out[i, 2] = c_ex * hz + c_an * m[i, 2] + drift_h[i]


@njit(cache=True)
def _rhs_kernel(m, nb, fixed, drift_h, ux, uy, c_ex, c_an,
                gamma_p, alpha, xi, inv_h, has_drive, out):
    n = m.shape[0]
    for i in range(n):
        if fixed[i]:
            out[i, 0] = 0.0
            out[i, 1] = 0.0
            out[i, 2] = 0.0
            continue
        mx = m[i, 0]
        my = m[i, 1]
        mz = m[i, 2]
        hx = 0.0
        hy = 0.0
        hz = 0.0
        for k in range(4):
            j = nb[i, k]
            if j >= 0:
                hx += m[j, 0] - mx
                hy += m[j, 1] - my
                hz += m[j, 2] - mz
        hx *= c_ex
        hy *= c_ex
        hz = c_ex * hz + c_an * mz + drift_h[i]

        px = my * hz - mz * hy
        py = mz * hx - mx * hz
        pz = mx * hy - my * hx
        qx = my * pz - mz * py
        qy = mz * px - mx * pz
        qz = mx * py - my * px
        ox = -gamma_p * (px + alpha * qx)
        oy = -gamma_p * (py + alpha * qy)
        oz = -gamma_p * (pz + alpha * qz)

        if has_drive and (ux[i] != 0.0 or uy[i] != 0.0):
            jm = nb[i, 0]
            jp = nb[i, 1]
            if jm >= 0 and jp >= 0:
                gxx = (m[jp, 0] - m[jm, 0]) * 0.5 * inv_h
                gxy = (m[jp, 1] - m[jm, 1]) * 0.5 * inv_h
                gxz = (m[jp, 2] - m[jm, 2]) * 0.5 * inv_h
            elif jp >= 0:
                gxx = (m[jp, 0] - mx) * inv_h
                gxy = (m[jp, 1] - my) * inv_h
                gxz = (m[jp, 2] - mz) * inv_h
            elif jm >= 0:
                gxx = (mx - m[jm, 0]) * inv_h
                gxy = (my - m[jm, 1]) * inv_h
                gxz = (mz - m[jm, 2]) * inv_h
            else:
                gxx = 0.0
                gxy = 0.0
                gxz = 0.0
            jm = nb[i, 2]
            jp = nb[i, 3]
            if jm >= 0 and jp >= 0:
                gyx = (m[jp, 0] - m[jm, 0]) * 0.5 * inv_h
                gyy = (m[jp, 1] - m[jm, 1]) * 0.5 * inv_h
                gyz = (m[jp, 2] - m[jm, 2]) * 0.5 * inv_h
            elif jp >= 0:
                gyx = (m[jp, 0] - mx) * inv_h
                gyy = (m[jp, 1] - my) * inv_h
                gyz = (m[jp, 2] - mz) * inv_h
            elif jm >= 0:
                gyx = (mx - m[jm, 0]) * inv_h
                gyy = (my - m[jm, 1]) * inv_h
                gyz = (mz - m[jm, 2]) * inv_h
            else:
                gyx = 0.0
                gyy = 0.0
                gyz = 0.0
            ax = ux[i] * gxx + uy[i] * gyx
            ay = ux[i] * gxy + uy[i] * gyy
            az = ux[i] * gxz + uy[i] * gyz
            # adiabatic transport plus non-adiabatic correction
            ox += -ax + xi * (my * az - mz * ay)
            oy += -ay + xi * (mz * ax - mx * az)
            oz += -az + xi * (mx * ay - my * ax)

        out[i, 0] = ox
        out[i, 1] = oy
        out[i, 2] = oz


@njit(cache=True)
def _energy_kernel(m, nb, drift_h, a_ex, k_eff, m_sat, cell, thickness):
    n = m.shape[0]
    vol = cell * cell * thickness
    e = 0.0
    for i in range(n):
        # count each face once via the +x / +y neighbors
        for k in range(2):
            j = nb[i, 2 * k + 1]
            if j >= 0:
                dx = m[j, 0] - m[i, 0]
                dy = m[j, 1] - m[i, 1]
                dz = m[j, 2] - m[i, 2]
                e += a_ex * (dx * dx + dy * dy + dz * dz) * thickness
        e += k_eff * (1.0 - m[i, 2] * m[i, 2]) * vol
        # drift Zeeman term, gauged to vanish for uniform +z
        e -= MU0 * m_sat * drift_h[i] * (m[i, 2] - 1.0) * vol
    return e


@njit(cache=True)
def _max_torque_kernel(m, nb, fixed, drift_h, c_ex, c_an):
    n = m.shape[0]
    worst = 0.0
    for i in range(n):
        if fixed[i]:
            continue
        mx = m[i, 0]
        my = m[i, 1]
        mz = m[i, 2]
        hx = 0.0
        hy = 0.0
        hz = 0.0
        for k in range(4):
            j = nb[i, k]
            if j >= 0:
                hx += m[j, 0] - mx
                hy += m[j, 1] - my
                hz += m[j, 2] - mz
        hx *= c_ex
        hy *= c_ex
        hz = c_ex * hz + c_an * mz + drift_h[i]
        px = my * hz - mz * hy
        py = mz * hx - mx * hz
        pz = mx * hy - my * hx
        t2 = px * px + py * py + pz * pz
        if t2 > worst:
            worst = t2
    return math.sqrt(worst)


# ---------------------------------------------------------------------------
# public field / energy operations
# ---------------------------------------------------------------------------

def _field_coeffs(state: MagState, params: MaterialParams) -> tuple[float, float]:
    h = state.grid.cell_size
    c_ex = 2.0 * params.a_ex / (MU0 * params.m_sat * h * h)
    c_an = 2.0 * params.k_eff / (MU0 * params.m_sat)
    return c_ex, c_an


def effective_field(state: MagState, params: MaterialParams) -> np.ndarray:
    """H_eff [A/m] per included cell: exchange + anisotropy + drift."""
    c_ex, c_an = _field_coeffs(state, params)
    out = np.empty_like(state.m)
    _field_kernel(state.m, state.nb, _drift_field(state, params), c_ex, c_an, out)
    return out


def total_energy(state: MagState, params: MaterialParams) -> float:
    """Exchange + anisotropy + drift-Zeeman energy [J]; 0 for uniform +z."""
    return float(_energy_kernel(state.m, state.nb, _drift_field(state, params),
                                params.a_ex, params.k_eff, params.m_sat,
                                state.grid.cell_size, state.thickness))


def max_torque(state: MagState, params: MaterialParams) -> float:
    """max |m x H_eff| [A/m] over free cells; the relaxation criterion."""
    c_ex, c_an = _field_coeffs(state, params)
    return float(_max_torque_kernel(state.m, state.nb, state.fixed_cells,
                                    _drift_field(state, params), c_ex, c_an))


def _pack_drive(state: MagState, params: MaterialParams,
                drive: DriveSpec | None) -> tuple[np.ndarray, np.ndarray, bool]:
    n = state.n_cells
    if drive is None or drive.current_scale == 0.0:
        z = np.zeros(n)
        return z, z, False
    pref = params.stt_prefactor * drive.current_scale
    ux = drive.current_map.jx[state.ix, state.iy] * pref
    uy = drive.current_map.jy[state.ix, state.iy] * pref
    return ux, uy, True


# ---------------------------------------------------------------------------
# Dormand-Prince RK45
# ---------------------------------------------------------------------------

_DP_A = np.zeros((7, 6))
_DP_A[1, :1] = [1 / 5]
_DP_A[2, :2] = [3 / 40, 9 / 40]
_DP_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_DP_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_DP_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_DP_A[6, :6] = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_DP_E = np.array([35 / 384 - 5179 / 57600, 0.0, 500 / 1113 - 7571 / 16695,
                  125 / 192 - 393 / 640, -2187 / 6784 + 92097 / 339200,
                  11 / 84 - 187 / 2100, -1 / 40])


@njit(cache=True)
def _dp45_attempt(m, dt, tol, nb, fixed, drift_h, ux, uy, c_ex, c_an,
                  gamma_p, alpha, xi, inv_h, has_drive, a_tab, e_tab,
                  k, ytmp, escr):
    """One embedded step; on success (err <= tol) writes the renormalized
    5th-order solution into m (fixed cells bitwise untouched). Returns err."""
    n3 = m.size
    mf = m.reshape(n3)
    yf = ytmp.reshape(n3)
    ef = escr.reshape(n3)
    kf = k.reshape(7, n3)
    _rhs_kernel(m, nb, fixed, drift_h, ux, uy, c_ex, c_an,
                gamma_p, alpha, xi, inv_h, has_drive, k[0])
    for s in range(1, 7):
        for p in range(n3):
            acc = mf[p]
            for j in range(s):
                a = a_tab[s, j]
                if a != 0.0:
                    acc += dt * a * kf[j, p]
            yf[p] = acc
        _rhs_kernel(ytmp, nb, fixed, drift_h, ux, uy, c_ex, c_an,
                    gamma_p, alpha, xi, inv_h, has_drive, k[s])
    # row 7 of the tableau equals b5: ytmp now holds the 5th-order solution
    err = 0.0
    for p in range(n3):
        e = 0.0
        for j in range(7):
            if e_tab[j] != 0.0:
                e += e_tab[j] * kf[j, p]
        e = abs(dt * e)
        if e > err:
            err = e
    if err <= tol:
        for i in range(m.shape[0]):
            if fixed[i]:
                continue
            norm = math.sqrt(ytmp[i, 0] ** 2 + ytmp[i, 1] ** 2 + ytmp[i, 2] ** 2)
            m[i, 0] = ytmp[i, 0] / norm
            m[i, 1] = ytmp[i, 1] / norm
            m[i, 2] = ytmp[i, 2] / norm
    return err

DEFAULT_ERR_TOL = 1e-8
DEFAULT_MAX_DT = 1e-12          # at the 5 nm reference cell
_REFERENCE_CELL = 5e-9
RELAX_TORQUE_TOL = 1e-4          # * m_sat
RELAX_TIME_CAP = 1e-9


def default_max_dt(grid: GridSpec) -> float:
    """Stability-limited cap; the exchange stiffness scales as cell^2."""
    return DEFAULT_MAX_DT * (grid.cell_size / _REFERENCE_CELL) ** 2


class _Stepper:
    """Embedded RK45 over a packed magnetization array."""

    def __init__(self, state: MagState, params: MaterialParams,
                 drive: DriveSpec | None, max_dt: float, err_tol: float | None):
        self.state = state
        self.params = params
        self.max_dt = max_dt
        self.err_tol = err_tol
        c_ex, c_an = _field_coeffs(state, params)
        self._args = (state.nb, state.fixed_cells, _drift_field(state, params))
        ux, uy, has_drive = _pack_drive(state, params, drive)
        self._drive = (ux, uy, has_drive)
        # H is carried in A/m, so the precession rate is gamma * mu0 * H
        gamma_p = params.gamma * MU0 / (1.0 + params.alpha**2)
        self._c = (c_ex, c_an, gamma_p,
                   params.alpha, params.xi, 1.0 / state.grid.cell_size)
        n = state.n_cells
        self._k = np.empty((7, n, 3))
        self._ytmp = np.empty((n, 3))
        self._escr = np.empty((n, 3))
        self.dt = max_dt / 16.0

    def advance(self, t_target: float, stop_check=None,
                check_every: int = 25) -> None:
        """Integrate the owned state to t_target (or until stop_check)."""
        state = self.state
        nb, fixed, drift_h = self._args
        ux, uy, has_drive = self._drive
        c_ex, c_an, gamma_p, alpha, xi, inv_h = self._c
        tol = math.inf if self.err_tol is None else self.err_tol
        n_steps = 0
        while t_target - state.sim_time > 1e-21:
            dt = min(self.dt, self.max_dt, t_target - state.sim_time)
            err = _dp45_attempt(state.m, dt, tol, nb, fixed, drift_h, ux, uy,
                                c_ex, c_an, gamma_p, alpha, xi, inv_h,
                                has_drive, _DP_A, _DP_E, self._k, self._ytmp,
                                self._escr)
            if not math.isfinite(err):
                self.dt = dt * 0.25
                if self.dt < 1e-20:
                    finite = np.isfinite(self._k[0]).all(axis=1)
                    bad = int(np.argmin(finite))
                    raise NonFiniteStateError(bad, state.sim_time)
                continue
            if err > tol:
                self.dt = dt * max(0.2, 0.9 * (tol / err) ** 0.2)
                if self.dt < 1e-18:
                    raise RuntimeError("step size underflow in RK45")
                continue

            state.sim_time += dt
            if self.err_tol is not None:
                grow = 5.0 if err == 0.0 else min(5.0, 0.9 * (tol / err) ** 0.2)
                self.dt = min(self.max_dt, dt * max(0.2, grow))
            n_steps += 1
            if stop_check is not None and n_steps % check_every == 0:
                if stop_check():
                    return


def step(state: MagState, params: MaterialParams, drive: DriveSpec | None,
         dt: float) -> MagState:
    """Advance one fixed RK45 step of size dt; returns the mutated state."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    stepper = _Stepper(state, params, drive, max_dt=dt, err_tol=None)
    stepper.advance(state.sim_time + dt)
    return state


def init_domain_wall(mask: Mask, grid: GridSpec, params: MaterialParams,
                     x0: float, thickness: float,
                     relax: bool = True) -> MagState:
    """Tanh wall at x0 (+z on the wide side), then a damped relaxation.

    The relaxation runs with the damping raised to 0.5 and both the drift
    field and current off, so the wall settles its internal structure at
    x0 instead of sliding away.
    """
    h = grid.cell_size
    xc = (np.arange(grid.nx) + 0.5) * h
    fixed_cols = np.nonzero(mask.fixed.any(axis=1))[0]
    track_cols = np.nonzero(mask.included.any(axis=1))[0]
    i0 = int(np.clip(x0 / h, 0, grid.nx - 1))
    if i0 in fixed_cols or i0 not in track_cols:
        raise ValueError(f"x0 = {x0:g} m lies inside a fixed region or outside "
                         "the track")

    delta = params.wall_delta
    arg = (x0 - xc) / delta
    mz = np.tanh(arg)
    mx = 1.0 / np.cosh(arg)    # Neel core
    m_grid = np.zeros((grid.nx, grid.ny, 3))
    m_grid[:, :, 0] = mx[:, None]
    m_grid[:, :, 2] = mz[:, None]

    state = make_state(mask, grid, thickness, m_grid)
    norm = np.linalg.norm(state.m, axis=1)
    state.m /= norm[:, None]
    state.m_fixed = state.m[state.fixed_cells].copy()

    if relax:
        relax_params = replace(params, alpha=0.5, drift_coupling=0.0)
        tol = RELAX_TORQUE_TOL * params.m_sat
        stepper = _Stepper(state, relax_params, None,
                           max_dt=default_max_dt(grid), err_tol=DEFAULT_ERR_TOL)
        stepper.advance(RELAX_TIME_CAP,
                        stop_check=lambda: max_torque(state, relax_params) < tol)
        state.sim_time = 0.0
    return state


def run(state: MagState, params: MaterialParams, drive: DriveSpec | None,
        t_end: float, sample_dt: float, recorder, *,
        max_dt: float | None = None, err_tol: float = DEFAULT_ERR_TOL) -> str:
    """Integrate to t_end, invoking the recorder at each sample instant.

    ``recorder(t, state)`` is called at t = 0 and then every ``sample_dt``
    (and at exactly t_end); it returns None to continue or a termination
    label to stop early (e.g. when the wall reaches a fixed region).
    Returns the termination label ("t_end" for a full run).
    """
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    if max_dt is None:
        max_dt = default_max_dt(state.grid)
    if t_end > 0 and sample_dt < max_dt:
        max_dt = sample_dt

    label = recorder(state.sim_time, state)
    if label:
        return label
    if t_end == 0:
        return "t_end"

    stepper = _Stepper(state, params, drive, max_dt=max_dt, err_tol=err_tol)
    t0 = state.sim_time
    n_samples = max(1, int(math.ceil((t_end - 1e-21) / sample_dt)))
    for s in range(1, n_samples + 1):
        t_next = min(t0 + s * sample_dt, t0 + t_end)
        stepper.advance(t_next)
        label = recorder(state.sim_time, state)
        if label:
            return label
    return "t_end"


# ---------------------------------------------------------------------------
# checkpointing: one JSON header line, then raw little-endian arrays
# ---------------------------------------------------------------------------

def save_state(state: MagState, path: str) -> None:
    header = {
        "nx": state.grid.nx, "ny": state.grid.ny,
        "cell_size": state.grid.cell_size, "thickness": state.thickness,
        "sim_time": state.sim_time, "n_cells": state.n_cells,
    }
    with open(path, "wb") as f:
        f.write((json.dumps(header, sort_keys=True) + "\n").encode())
        f.write(np.packbits(state.mask.included).tobytes())
        f.write(np.packbits(state.mask.fixed).tobytes())
        f.write(state.m.astype("<f8").tobytes())


def load_state(path: str) -> MagState:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        nx, ny = header["nx"], header["ny"]
        nbits = nx * ny
        nbytes = (nbits + 7) // 8
        included = np.unpackbits(np.frombuffer(f.read(nbytes), dtype=np.uint8),
                                 count=nbits).astype(bool).reshape(nx, ny)
        fixed = np.unpackbits(np.frombuffer(f.read(nbytes), dtype=np.uint8),
                              count=nbits).astype(bool).reshape(nx, ny)
        m = np.frombuffer(f.read(), dtype="<f8").reshape(header["n_cells"], 3)
    grid = GridSpec(cell_size=header["cell_size"], nx=nx, ny=ny)
    mask = Mask(included=included, fixed=fixed)
    m_grid = np.zeros((nx, ny, 3))
    m_grid[included] = m
    state = make_state(mask, grid, header["thickness"], m_grid)
    state.sim_time = header["sim_time"]
    return state
