"""1D collective-coordinate neuron: wall position under shape force + current.

The wall coordinate x obeys an overdamped rate equation

    dx/dt = mobility * F(x) * (w_wide / w(x)) + stt_gain * J(x)

where F(x) is the shape force from the smoothed width profile (negative,
i.e. toward the wide end, wherever the track narrows with x), the
w_wide / w(x) factor accounts for wall friction growing with wall length
(mobility is referenced to the wide end), and J(x) = I / (w(x) t) is the
1D current density. Crossing threshold_x from below fires the neuron and
resets x to the fully-leaked position. Coefficients start from analytic
estimates of the grid model and are refined by :func:`calibrate`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .constants import MU0
from .geometry import (DEFAULT_CELL_SIZE, DEFAULT_FIXED_MARGIN, ShapeKind,
                       TrackShape, make_track_shape, width_at)
from .llg import MaterialParams
from .analysis import PositionTrace, truncate_at_saturation

MTJ_THRESHOLD_FRACTION = 0.85


class CalibrationError(RuntimeError):
    """Trace carries no usable signal for the requested fit."""


@dataclass(frozen=True)
class NeuronModel:
    """Calibrated 1D wall-neuron; immutable and shareable across threads."""

    shape: TrackShape
    wall_energy_density: float   # sigma_w [J/m^2]
    mobility: float              # [m/(s*N)], referenced to the wide end
    stt_gain: float              # [m^3/(A*s)]
    threshold_x: float
    reset_x: float
    x_min: float
    x_max: float
    cell_size: float = DEFAULT_CELL_SIZE
    drift_range: float = 150e-9
    force_saturation: float = 0.0   # matches the grid drift cap; 0 = none
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.x_min < self.threshold_x <= self.x_max:
            raise ValueError("need x_min < threshold_x <= x_max")
        if not self.x_min < self.reset_x < self.threshold_x:
            raise ValueError("reset_x must lie between x_min and threshold_x")
        if self.mobility <= 0 or self.stt_gain <= 0:
            raise ValueError("mobility and stt_gain must be positive")


@dataclass
class NeuronState:
    x: float
    t: float = 0.0
    fired_at: list = field(default_factory=list)


# force tables keyed by the geometry/smoothing fingerprint
_table_cache: dict = {}


def _profile_table(model: NeuronModel):
    key = (model.shape, model.cell_size, model.drift_range,
           model.force_saturation, model.wall_energy_density)
    cached = _table_cache.get(key)
    if cached is not None:
        return cached
    shape = model.shape
    h = model.cell_size
    xs = np.arange(0.5 * h, shape.length, h)
    w_raw = np.asarray(width_at(shape, xs))
    logw = np.log(w_raw)
    if model.drift_range > 0:
        logw = ndimage.gaussian_filter1d(logw, sigma=model.drift_range / h,
                                         mode="nearest")
    w_s = np.exp(logw)
    grad = np.gradient(logw, h)
    if model.force_saturation > 0:
        # same soft cap the grid drift field applies to steep tapers
        cap = model.force_saturation
        grad = cap * np.tanh(grad / cap)
    force = model.wall_energy_density * shape.thickness * w_s * grad
    table = (xs, w_raw, w_s, force)
    _table_cache[key] = table
    return table


def shape_force(model: NeuronModel, x: float) -> float:
    """Shape-induced force on the wall [N]; negative points to the wide end."""
    if not model.x_min <= x <= model.x_max:
        raise ValueError(f"x = {x:g} m outside [{model.x_min:g}, {model.x_max:g}]")
    xs, _, _, force = _profile_table(model)
    return float(np.interp(x, xs, force))


def _velocity(model: NeuronModel, x: float, current: float) -> float:
    xs, w_raw, w_s, force = _profile_table(model)
    f = np.interp(x, xs, force)
    ws = np.interp(x, xs, w_s)
    v = model.mobility * f * (model.shape.w_wide / ws)
    if current != 0.0:
        w = np.interp(x, xs, w_raw)
        v += model.stt_gain * current / (w * model.shape.thickness)
    return float(v)


def step_neuron(model: NeuronModel, state: NeuronState, input_current: float,
                dt: float) -> tuple[NeuronState, bool]:
    """Advance by dt with sub-stepping (|dx| <= one cell per sub-step)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not np.isfinite(input_current):
        raise ValueError("input current must be finite")
    remaining = dt
    fired = False
    x = state.x
    while remaining > 1e-24:
        v = _velocity(model, x, input_current)
        sub = remaining if v == 0.0 else min(remaining, model.cell_size / abs(v))
        x_new = x + v * sub
        if x < model.threshold_x <= x_new:
            # fire-reset is atomic: the remainder of the step is absorbed
            state.fired_at.append(state.t + (dt - remaining) + sub)
            fired = True
            x = model.reset_x
            break
        x = min(max(x_new, model.x_min), model.x_max)
        remaining -= sub
    state.x = x
    state.t += dt
    return state, fired


def reduced_trace(model: NeuronModel, x_start: float, t_end: float,
                  sample_dt: float = 1e-10, current: float = 0.0) -> PositionTrace:
    """Integrate the rate equation and record positions like the grid runs."""
    state = NeuronState(x=x_start)
    n = int(round(t_end / sample_dt))
    ts = [0.0]
    xs = [x_start]
    for k in range(1, n + 1):
        step_neuron(model, state, current, sample_dt)
        ts.append(k * sample_dt)
        xs.append(state.x)
    meta = {"shape": model.shape.label(), "length": model.shape.length,
            "current_A": current, "model": "reduced",
            "fixed_margin": model.x_min}
    return PositionTrace(t=np.asarray(ts), x=np.asarray(xs), metadata=meta)


def steady_leak_x(model: NeuronModel, x_start: float | None = None,
                  velocity_tol: float = 0.01, t_cap: float = 2e-6) -> float:
    """Zero-current equilibrium position of the rate equation."""
    x = model.x_max - model.cell_size if x_start is None else x_start
    t, dt = 0.0, 1e-10
    while t < t_cap:
        v = _velocity(model, x, 0.0)
        if abs(v) < velocity_tol:
            return x
        x = min(max(x + v * min(dt, model.cell_size / abs(v)), model.x_min),
                model.x_max)
        if x <= model.x_min:
            return model.x_min
        t += dt
    return x


def build_neuron_model(shape: TrackShape, params: MaterialParams, *,
                       cell_size: float = DEFAULT_CELL_SIZE,
                       fixed_margin: float = DEFAULT_FIXED_MARGIN,
                       threshold_fraction: float = MTJ_THRESHOLD_FRACTION) -> NeuronModel:
    """Uncalibrated model with coefficients predicted from the grid physics."""
    sigma_w = params.wall_energy_density
    # net drift minus wall tension, converted through the precessional
    # wall mobility alpha*gamma*delta/(1+alpha^2)
    b_net = params.drift_coupling - sigma_w / (2.0 * params.m_sat)
    wall_speed_per_field = (params.alpha * params.gamma * params.wall_delta
                            / (1.0 + params.alpha**2))
    mobility = max(wall_speed_per_field * b_net, 1e-12) / (
        sigma_w * shape.thickness * shape.w_wide)
    model = NeuronModel(
        shape=shape,
        wall_energy_density=sigma_w,
        mobility=mobility,
        stt_gain=params.stt_prefactor,
        threshold_x=threshold_fraction * shape.length,
        reset_x=0.5 * shape.length,     # placeholder until the leak settles
        x_min=fixed_margin,
        x_max=shape.length - fixed_margin,
        cell_size=cell_size,
        drift_range=params.drift_range,
        force_saturation=params.drift_cap / max(params.drift_coupling, 1e-30),
    )
    return replace(model, reset_x=max(steady_leak_x(model),
                                      fixed_margin + cell_size))


def calibrate(model: NeuronModel, leak_trace: PositionTrace,
              integ_trace: PositionTrace | None = None) -> NeuronModel:
    """Fit mobility (and stt_gain, if an integration trace is given).

    Least squares of measured dx/dt against the model's velocity basis on
    the leak trace; the integration trace then fits stt_gain on the
    residual velocity.
    """
    leak = truncate_at_saturation(leak_trace)
    if len(leak.t) < 20:
        raise CalibrationError("need at least 20 usable leak samples")
    if float(np.ptp(leak.x)) < 2 * model.cell_size:
        raise CalibrationError("leak trace shows no wall motion to fit")

    xs, w_raw, w_s, force = _profile_table(model)
    v = np.gradient(leak.x, leak.t)
    f = np.interp(leak.x, xs, force)
    basis = f * (model.shape.w_wide / np.interp(leak.x, xs, w_s))
    denom = float((basis ** 2).sum())
    if denom <= 0 or float(np.abs(basis).max()) == 0.0:
        raise CalibrationError("shape force vanishes along the leak trace")
    mobility = float((v * basis).sum() / denom)
    if mobility <= 0:
        raise CalibrationError("leak trace moves against the shape force")
    resid = v - mobility * basis
    ss_tot = float(((v - v.mean()) ** 2).sum())
    diagnostics = {
        "leak_r2": 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0,
        "leak_residual_rms": float(np.sqrt((resid ** 2).mean())),
    }

    stt_gain = model.stt_gain
    if integ_trace is not None:
        integ = truncate_at_saturation(integ_trace)
        current = integ.metadata.get("current_A", 0.0)
        if current == 0.0 or len(integ.t) < 5:
            raise CalibrationError("integration trace lacks a current drive")
        vi = np.gradient(integ.x, integ.t)
        fi = np.interp(integ.x, xs, force)
        leak_part = mobility * fi * (model.shape.w_wide / np.interp(integ.x, xs, w_s))
        j = current / (np.interp(integ.x, xs, w_raw) * model.shape.thickness)
        stt_gain = float(((vi - leak_part) * j).sum() / (j ** 2).sum())
        if stt_gain <= 0:
            raise CalibrationError("integration trace moves against the drive")
        ri = vi - leak_part - stt_gain * j
        ss_tot_i = float(((vi - vi.mean()) ** 2).sum())
        diagnostics["integration_r2"] = (1.0 - float((ri ** 2).sum()) / ss_tot_i
                                         if ss_tot_i > 0 else 1.0)
        diagnostics["integration_residual_rms"] = float(np.sqrt((ri ** 2).mean()))

    out = replace(model, mobility=mobility, stt_gain=stt_gain,
                  diagnostics=diagnostics)
    return replace(out, reset_x=max(steady_leak_x(out),
                                    model.x_min + model.cell_size))


# ---------------------------------------------------------------------------
# serialization (consumed by the network module and the CLI)
# ---------------------------------------------------------------------------

def model_to_dict(model: NeuronModel) -> dict:
    s = model.shape
    return {
        "shape": {
            "kind": s.kind.value, "length": s.length, "w_wide": s.w_wide,
            "w_narrow": s.w_narrow, "thickness": s.thickness, "b": s.b,
            "w1": s.w1, "constriction_width": s.constriction_width,
            "constriction_extent": s.constriction_extent,
        },
        "wall_energy_density": model.wall_energy_density,
        "mobility": model.mobility,
        "stt_gain": model.stt_gain,
        "threshold_x": model.threshold_x,
        "reset_x": model.reset_x,
        "x_min": model.x_min,
        "x_max": model.x_max,
        "cell_size": model.cell_size,
        "drift_range": model.drift_range,
        "force_saturation": model.force_saturation,
        "diagnostics": model.diagnostics,
    }


def model_from_dict(d: dict) -> NeuronModel:
    sd = d["shape"]
    kind = ShapeKind(sd["kind"])
    if kind is ShapeKind.CONSTRICTED:
        shape = make_track_shape(kind, length=sd["length"],
                                 thickness=sd["thickness"], w1=sd["w1"],
                                 constriction_width=sd["constriction_width"],
                                 constriction_extent=sd["constriction_extent"])
    else:
        shape = make_track_shape(kind, length=sd["length"], w_wide=sd["w_wide"],
                                 w_narrow=sd["w_narrow"],
                                 thickness=sd["thickness"], b=sd.get("b", 1.0))
    return NeuronModel(shape=shape,
                       wall_energy_density=d["wall_energy_density"],
                       mobility=d["mobility"], stt_gain=d["stt_gain"],
                       threshold_x=d["threshold_x"], reset_x=d["reset_x"],
                       x_min=d["x_min"], x_max=d["x_max"],
                       cell_size=d["cell_size"], drift_range=d["drift_range"],
                       force_saturation=d.get("force_saturation", 0.0),
                       diagnostics=d.get("diagnostics", {}))


def save_model(model: NeuronModel, path: str) -> None:
    with open(path, "w") as f:
        json.dump(model_to_dict(model), f, indent=2, sort_keys=True)


def load_model(path: str) -> NeuronModel:
    with open(path) as f:
        return model_from_dict(json.load(f))
