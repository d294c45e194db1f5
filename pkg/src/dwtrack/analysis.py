"""Wall-position extraction and the leak / integration experiments.

Everything downstream of the grid solver works on PositionTrace objects:
time series of the domain-wall position extracted from magnetization
states. The extraction takes the per-column mean of mz over included
cells (area weighting, so the estimate is width independent) and returns
the interpolated zero crossing of that profile.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import llg
from .currentmap import CurrentMap, solve_current
from .geometry import (DEFAULT_CELL_SIZE, DEFAULT_FIXED_MARGIN, GridSpec, Mask,
                       TrackShape, default_grid, rasterize)

DEFAULT_SAMPLE_DT = 1e-10
MTJ_THRESHOLD_FRACTION = 0.85   # MTJ read position, measured from the wide end


class WallSaturated(RuntimeError):
    """The mz profile has no zero crossing: the wall annihilated at an end."""

    def __init__(self, end: str):
        super().__init__(f"wall saturated at the {end} end of the track")
        self.end = end


class SteadyStateNotReached(RuntimeError):
    def __init__(self, last_x: float, t_cap: float):
        super().__init__(f"leak velocity did not settle within {t_cap:.3e} s "
                         f"(last position {last_x:.3e} m)")
        self.last_x = last_x


@dataclass
class PositionTrace:
    """Samples (t [s], x_dw [m]) plus provenance metadata."""

    t: np.ndarray
    x: np.ndarray
    metadata: dict
    termination: str = "t_end"

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.t.tolist(), self.x.tolist()))

    def __post_init__(self):
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("trace times must be strictly increasing")


@dataclass
class ActivationCurve:
    """Neuron response vs input current."""

    currents: np.ndarray
    outputs: np.ndarray
    mode: str  # "steady_position" | "firing_rate"

    def __post_init__(self):
        if not np.all(np.diff(self.currents) > 0):
            raise ValueError("activation currents must be strictly increasing")
        if self.mode == "firing_rate" and np.any(self.outputs < 0):
            raise ValueError("firing rates cannot be negative")


@dataclass
class SigmoidalityReport:
    inflection_x: float     # position at the point of maximal |dx/dt| [m]
    max_slope_t: float      # time of that point [s]
    monotone: bool
    sigmoidal: bool
    max_slope: float = 0.0  # [m/s]


def dw_position(state: llg.MagState) -> float:
    """Interpolated zero crossing of the column-averaged mz profile [m]."""
    cols, prof = state.column_mz()
    pos = prof > 0
    if pos.all():
        raise WallSaturated("right")
    if (~pos).all():
        raise WallSaturated("left")
    cross = np.nonzero(pos[:-1] & ~pos[1:])[0]
    if len(cross) == 0:
        # profile inverted or pure noise; treat by dominant sign
        raise WallSaturated("right" if prof.mean() > 0 else "left")
    if len(cross) > 1:
        cross = cross[np.argmax(prof[cross] - prof[cross + 1])]
    else:
        cross = cross[0]
    h = state.grid.cell_size
    x_lo = (cols[cross] + 0.5) * h
    x_hi = (cols[cross + 1] + 0.5) * h
    p_lo, p_hi = prof[cross], prof[cross + 1]
    return float(x_lo + (x_hi - x_lo) * p_lo / (p_lo - p_hi))


class TraceRecorder:
    """Sampling callback for llg.run: extracts positions, detects stops."""

    def __init__(self, length: float, fixed_margin: float,
                 steady_tol: float | None = None,
                 steady_window: float = 5e-9):
        self.length = length
        self.fixed_margin = fixed_margin
        self.steady_tol = steady_tol
        self.steady_window = steady_window
        self.ts: list[float] = []
        self.xs: list[float] = []

    def __call__(self, t: float, state: llg.MagState) -> str | None:
        try:
            x = dw_position(state)
        except WallSaturated as exc:
            return f"saturated_{exc.end}"
        self.ts.append(t)
        self.xs.append(x)
        if x <= self.fixed_margin:
            return "fixed_region_left"
        if x >= self.length - self.fixed_margin:
            return "fixed_region_right"
        if self.steady_tol is not None and t - self.ts[0] >= self.steady_window:
            k = np.searchsorted(self.ts, t - self.steady_window)
            t_past, x_past = self.ts[k], self.xs[k]
            if t - t_past > 0 and abs(x - x_past) / (t - t_past) < self.steady_tol:
                return "steady"
        return None

    def trace(self, metadata: dict, termination: str) -> PositionTrace:
        return PositionTrace(t=np.asarray(self.ts), x=np.asarray(self.xs),
                             metadata=metadata, termination=termination)


# ---------------------------------------------------------------------------
# per-shape caches: mask, unit current map, steady leak position
# ---------------------------------------------------------------------------

_mask_cache: dict = {}
_cmap_cache: dict = {}
_steady_cache: dict = {}


def params_hash(params: llg.MaterialParams) -> str:
    return hashlib.md5(json.dumps(asdict(params), sort_keys=True).encode()).hexdigest()[:12]


def track_setup(shape: TrackShape, cell_size: float = DEFAULT_CELL_SIZE,
                fixed_margin: float = DEFAULT_FIXED_MARGIN) -> tuple[GridSpec, Mask]:
    key = (shape, cell_size, fixed_margin)
    if key not in _mask_cache:
        grid = default_grid(shape, cell_size)
        _mask_cache[key] = (grid, rasterize(shape, grid, fixed_margin))
    return _mask_cache[key]


def unit_current_map(shape: TrackShape, cell_size: float = DEFAULT_CELL_SIZE,
                     fixed_margin: float = DEFAULT_FIXED_MARGIN) -> CurrentMap:
    """Current map at 1 A, rescaled per run by linearity."""
    key = (shape, cell_size, fixed_margin)
    if key not in _cmap_cache:
        grid, mask = track_setup(shape, cell_size, fixed_margin)
        _cmap_cache[key] = solve_current(mask, grid, shape.thickness, 1.0)
    return _cmap_cache[key]


def default_leak_start(shape: TrackShape, params: llg.MaterialParams,
                       fixed_margin: float = DEFAULT_FIXED_MARGIN) -> float:
    """Near the narrow end: clear of the fixed region by two wall widths."""
    return shape.length - 1.5 * fixed_margin - 2.0 * math.pi * params.wall_delta


def _trace_metadata(shape: TrackShape, params: llg.MaterialParams, current: float,
                    cell_size: float, fixed_margin: float, x_start: float) -> dict:
    return {
        "shape": shape.label(),
        "length": shape.length,
        "current_A": current,
        "params_hash": params_hash(params),
        "cell_size": cell_size,
        "fixed_margin": fixed_margin,
        "wall_width": math.pi * params.wall_delta,
        "x_start": x_start,
    }


def _run_trace(shape: TrackShape, params: llg.MaterialParams, current: float,
               t_end: float, x_start: float, cell_size: float,
               fixed_margin: float, sample_dt: float,
               steady_tol: float | None = None,
               max_dt: float | None = None) -> PositionTrace:
    grid, mask = track_setup(shape, cell_size, fixed_margin)
    state = llg.init_domain_wall(mask, grid, params, x_start, shape.thickness)
    drive = None
    if current != 0.0:
        drive = llg.DriveSpec(unit_current_map(shape, cell_size, fixed_margin),
                              current_scale=current)
    recorder = TraceRecorder(shape.length, fixed_margin, steady_tol=steady_tol)
    termination = llg.run(state, params, drive, t_end, sample_dt, recorder,
                          max_dt=max_dt)
    meta = _trace_metadata(shape, params, current, cell_size, fixed_margin, x_start)
    return recorder.trace(meta, termination)


def simulate_leaking(shape: TrackShape, params: llg.MaterialParams, t_end: float,
                     x_start: float | None = None, *,
                     cell_size: float = DEFAULT_CELL_SIZE,
                     fixed_margin: float = DEFAULT_FIXED_MARGIN,
                     sample_dt: float = DEFAULT_SAMPLE_DT,
                     max_dt: float | None = None) -> PositionTrace:
    """Zero-current run from near the narrow end until t_end or saturation."""
    if x_start is None:
        x_start = default_leak_start(shape, params, fixed_margin)
    return _run_trace(shape, params, 0.0, t_end, x_start, cell_size,
                      fixed_margin, sample_dt, max_dt=max_dt)


def simulate_integration(shape: TrackShape, params: llg.MaterialParams,
                         current: float, t_end: float,
                         x_start: float | None = None, *,
                         cell_size: float = DEFAULT_CELL_SIZE,
                         fixed_margin: float = DEFAULT_FIXED_MARGIN,
                         sample_dt: float = DEFAULT_SAMPLE_DT,
                         max_dt: float | None = None) -> PositionTrace:
    """Constant-current run; positive current drives toward the narrow end.

    x_start defaults to the fully-leaked steady position.
    """
    if x_start is None:
        x_start = steady_leaked_position(shape, params, cell_size=cell_size,
                                         fixed_margin=fixed_margin, max_dt=max_dt)
    return _run_trace(shape, params, current, t_end, x_start, cell_size,
                      fixed_margin, sample_dt, max_dt=max_dt)


def steady_leaked_position(shape: TrackShape, params: llg.MaterialParams, *,
                           cell_size: float = DEFAULT_CELL_SIZE,
                           fixed_margin: float = DEFAULT_FIXED_MARGIN,
                           velocity_tol: float = 0.01,
                           t_cap: float = 8e-7,
                           max_dt: float | None = None) -> float:
    """Leak until |dx/dt| < velocity_tol over 5 ns, or end saturation [m]."""
    key = (shape, params_hash(params), cell_size, fixed_margin)
    if key in _steady_cache:
        return _steady_cache[key]
    x_start = default_leak_start(shape, params, fixed_margin)
    trace = _run_trace(shape, params, 0.0, t_cap, x_start, cell_size,
                       fixed_margin, DEFAULT_SAMPLE_DT,
                       steady_tol=velocity_tol, max_dt=max_dt)
    if trace.termination == "t_end":
        raise SteadyStateNotReached(float(trace.x[-1]), t_cap)
    x = float(trace.x[-1])
    _steady_cache[key] = x
    return x


# ---------------------------------------------------------------------------
# trace metrics
# ---------------------------------------------------------------------------

def truncate_at_saturation(trace: PositionTrace) -> PositionTrace:
    """Drop samples after the wall first comes within one wall width of a
    fixed region; end pinning would otherwise contaminate travel metrics."""
    meta = trace.metadata
    ww = meta.get("wall_width")
    if ww is None or len(trace.t) == 0:
        return trace
    lo = meta["fixed_margin"] + ww
    hi = meta["length"] - meta["fixed_margin"] - ww
    inside = (trace.x <= lo) | (trace.x >= hi)
    if not inside.any():
        return trace
    k = int(np.argmax(inside))
    return PositionTrace(t=trace.t[:k + 1], x=trace.x[:k + 1],
                         metadata=meta, termination=trace.termination)


def linearity_rmse(trace: PositionTrace) -> tuple[float, float, float]:
    """(rmse [m], slope [m/s], intercept [m]) of an OLS line through x(t)."""
    trace = truncate_at_saturation(trace)
    t, x = trace.t, trace.x
    if len(t) < 3:
        raise ValueError("need at least 3 samples for a linearity fit")
    tm, xm = t.mean(), x.mean()
    denom = float(((t - tm) ** 2).sum())
    slope = float(((t - tm) * (x - xm)).sum() / denom)
    intercept = xm - slope * tm
    resid = x - (slope * t + intercept)
    rmse = float(np.sqrt((resid ** 2).mean()))
    return rmse, slope, intercept


def sigmoidality_check(trace: PositionTrace, window: int = 5) -> SigmoidalityReport:
    """Locate the maximal-|dx/dt| point of a smoothed trace.

    A trace counts as sigmoidal when it is monotone, the speed maximum sits
    strictly inside the window, and that maximum stands out from the mean
    speed by more than 10 percent.
    """
    t, x = trace.t, trace.x
    if len(t) < 10:
        raise ValueError("need at least 10 samples for a sigmoidality check")
    kern = np.ones(window) / window
    xs = np.convolve(x, kern, mode="valid")
    ts = t[window // 2: window // 2 + len(xs)]
    v = np.gradient(xs, ts)
    speed = np.abs(v)

    jitter = trace.metadata.get("cell_size", 0.0)
    dx = np.diff(x)
    monotone = bool(np.all(dx <= jitter) or np.all(dx >= -jitter))

    k = int(np.argmax(speed))
    interior = 0 < k < len(speed) - 1
    mean_speed = float(speed.mean())
    prominent = mean_speed > 0 and (speed[k] - mean_speed) > 0.1 * mean_speed
    return SigmoidalityReport(
        inflection_x=float(xs[k]),
        max_slope_t=float(ts[k]),
        monotone=monotone,
        sigmoidal=bool(monotone and interior and prominent),
        max_slope=float(v[k]),
    )


def extract_activation(shape: TrackShape, params: llg.MaterialParams,
                       current_grid, protocol: str = "steady_position", *,
                       cell_size: float = DEFAULT_CELL_SIZE,
                       fixed_margin: float = DEFAULT_FIXED_MARGIN,
                       t_cap: float = 4e-7,
                       rate_window: float = 3e-7,
                       max_dt: float | None = None) -> ActivationCurve:
    """Map input current to neuron output.

    steady_position: full-grid runs from the fully-leaked position under
    constant drive until the position settles (< 1 nm over 5 ns) or the
    track saturates; the final position is normalized so 0 is the leak
    origin and 1 the MTJ threshold position.

    firing_rate: drives the calibrated reduced neuron and counts fire
    events per unit time.
    """
    currents = np.asarray(sorted(set(float(c) for c in np.atleast_1d(current_grid))))
    if len(currents) < 3:
        raise ValueError("current_grid needs at least 3 distinct points")
    if len(currents) != len(np.atleast_1d(current_grid)):
        raise ValueError("current_grid must be strictly increasing")

    if protocol == "steady_position":
        x0 = steady_leaked_position(shape, params, cell_size=cell_size,
                                    fixed_margin=fixed_margin, max_dt=max_dt)
        x_thresh = MTJ_THRESHOLD_FRACTION * shape.length
        outputs = []
        for cur in currents:
            if cur == 0.0:
                outputs.append(0.0)
                continue
            trace = _run_trace(shape, params, cur, t_cap, x0, cell_size,
                               fixed_margin, DEFAULT_SAMPLE_DT,
                               steady_tol=0.2, max_dt=max_dt)
            x_final = float(trace.x[-1]) if len(trace.x) else shape.length
            if trace.termination in ("saturated_right", "fixed_region_right"):
                x_final = shape.length
            outputs.append(float(np.clip((x_final - x0) / (x_thresh - x0), 0.0, 1.0)))
        return ActivationCurve(currents=currents, outputs=np.asarray(outputs),
                               mode="steady_position")

    if protocol == "firing_rate":
        from . import reduced
        model = reduced.build_neuron_model(shape, params, cell_size=cell_size,
                                           fixed_margin=fixed_margin)
        outputs = []
        for cur in currents:
            state = reduced.NeuronState(x=model.reset_x)
            n_fired = 0
            t, dt = 0.0, 1e-10
            while t < rate_window:
                state, fired = reduced.step_neuron(model, state, cur, dt)
                n_fired += int(fired)
                t += dt
            outputs.append(n_fired / rate_window)
        return ActivationCurve(currents=currents, outputs=np.asarray(outputs),
                               mode="firing_rate")

    raise ValueError(f"unknown activation protocol: {protocol!r}")


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def trace_to_csv(trace: PositionTrace, path: str) -> None:
    meta = json.dumps(trace.metadata, sort_keys=True)
    with open(path, "w") as f:
        f.write("# dwtrack trace v1\n")
        f.write(f"# metadata {meta}\n")
        f.write(f"# termination {trace.termination}\n")
        f.write("t_seconds,x_meters\n")
        for t, x in zip(trace.t, trace.x):
            f.write(f"{t:.12g},{x:.12g}\n")


def activation_to_csv(curve: ActivationCurve, path: str) -> None:
    with open(path, "w") as f:
        f.write("# dwtrack activation v1\n")
        f.write(f"# mode {curve.mode}\n")
        f.write("current_A,output\n")
        for c, o in zip(curve.currents, curve.outputs):
            f.write(f"{c:.12g},{o:.12g}\n")
