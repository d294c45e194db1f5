"""Experiment configuration: YAML parsing, validation, defaults resolution."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, asdict

import yaml

from . import geometry
from .geometry import ShapeKind, TrackShape, make_track_shape
from .llg import MaterialParams

EXPERIMENTS = ("leak", "integrate", "rmse_sweep", "squash_sweep",
               "activation", "network_infer")


class ConfigError(ValueError):
    """Invalid configuration; carries one message per offending field."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class ExperimentConfig:
    experiment: str
    output_dir: str
    shape: TrackShape
    material: MaterialParams
    cell_size: float = geometry.DEFAULT_CELL_SIZE
    fixed_margin: float = geometry.DEFAULT_FIXED_MARGIN
    t_end: float = 2e-7
    sample_dt: float = 1e-10
    x_start: float | None = None
    currents: list = field(default_factory=lambda: [1e-4, 5e-4])
    b_values: list = field(default_factory=lambda: [1.0, 1.5, 2.0, 2.5, 3.0,
                                                    3.5, 4.0, 4.5, 5.0])
    w1_values: list = field(default_factory=lambda: [100e-9, 150e-9, 200e-9,
                                                     250e-9, 300e-9, 350e-9,
                                                     400e-9])
    activation_protocol: str = "steady_position"
    network_file: str | None = None
    spikes_file: str | None = None
    input_rate: float = 5e7        # Poisson rate per channel [Hz]
    network_dt: float = 1e-9
    seed: int = 1234
    threads: int = 0               # 0 = machine parallelism
    figures: bool = True
    export_mask: bool = False
    export_current_map: bool = False
    resolution_scale: float = 1.0

    def resolved_dict(self) -> dict:
        d = asdict(self)
        d["shape"]["kind"] = self.shape.kind.value
        return d


def _get(section: dict, key: str, default, problems: list, path: str,
         kind=float, positive: bool = False):
    if key not in section:
        return default
    value = section[key]
    try:
        value = kind(value)
    except (TypeError, ValueError):
        problems.append(f"{path}.{key}: expected {kind.__name__}, got {value!r}")
        return default
    if positive and value <= 0:
        problems.append(f"{path}.{key}: must be positive, got {value!r}")
        return default
    return value


def _build_shape(raw: dict, problems: list) -> TrackShape | None:
    kind_name = raw.get("kind", "trapezoid")
    try:
        kind = ShapeKind(kind_name)
    except ValueError:
        problems.append(f"shape.kind: unknown kind {kind_name!r} "
                        f"(choose from {[k.value for k in ShapeKind]})")
        return None
    kwargs = {}
    for key in ("length", "w_wide", "w_narrow", "thickness", "b", "w1",
                "constriction_width", "constriction_extent"):
        if key in raw:
            try:
                kwargs[key] = float(raw[key])
            except (TypeError, ValueError):
                problems.append(f"shape.{key}: expected a number, got {raw[key]!r}")
    try:
        return make_track_shape(kind, **kwargs)
    except (ValueError, TypeError) as exc:
        problems.append(f"shape: {exc}")
        return None


def _build_material(raw: dict, problems: list) -> MaterialParams | None:
    allowed = {"a_ex", "alpha", "xi", "m_sat", "ku1", "polarization", "gamma",
               "drift_coupling", "drift_range", "drift_cap"}
    kwargs = {}
    for key, value in raw.items():
        if key not in allowed:
            problems.append(f"material.{key}: unknown parameter")
            continue
        try:
            kwargs[key] = float(value)
        except (TypeError, ValueError):
            problems.append(f"material.{key}: expected a number, got {value!r}")
    try:
        return MaterialParams(**kwargs)
    except ValueError as exc:
        problems.append(f"material: {exc}")
        return None


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build and fully validate a config; raises ConfigError with all problems."""
    problems: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["config root: expected a mapping"])

    experiment = doc.get("experiment")
    if experiment not in EXPERIMENTS:
        problems.append(f"experiment: must be one of {EXPERIMENTS}, got {experiment!r}")
    output_dir = doc.get("output_dir")
    if not isinstance(output_dir, str) or not output_dir:
        problems.append("output_dir: required string")
        output_dir = "out"

    shape = _build_shape(doc.get("shape", {}) or {}, problems)
    material = _build_material(doc.get("material", {}) or {}, problems)

    grid_sec = doc.get("grid", {}) or {}
    run_sec = doc.get("run", {}) or {}
    sweep_sec = doc.get("sweep", {}) or {}
    net_sec = doc.get("network", {}) or {}

    cell_size = _get(grid_sec, "cell_size", geometry.DEFAULT_CELL_SIZE,
                     problems, "grid", positive=True)
    fixed_margin = _get(grid_sec, "fixed_margin", geometry.DEFAULT_FIXED_MARGIN,
                        problems, "grid", positive=True)
    t_end = _get(run_sec, "t_end", 2e-7, problems, "run", positive=True)
    sample_dt = _get(run_sec, "sample_dt", 1e-10, problems, "run", positive=True)
    x_start = run_sec.get("x_start")
    if x_start is not None:
        x_start = _get(run_sec, "x_start", None, problems, "run", positive=True)

    currents = run_sec.get("currents", [1e-4, 5e-4])
    if not isinstance(currents, list) or not currents:
        problems.append("run.currents: expected a non-empty list")
        currents = [1e-4]
    else:
        try:
            currents = [float(c) for c in currents]
        except (TypeError, ValueError):
            problems.append("run.currents: entries must be numbers")
            currents = [1e-4]

    b_values = sweep_sec.get("b_values", ExperimentConfig.__dataclass_fields__["b_values"].default_factory())
    try:
        b_values = [float(b) for b in b_values]
    except (TypeError, ValueError):
        problems.append("sweep.b_values: entries must be numbers")
        b_values = [1.0]
    for b in b_values:
        if b < 1:
            problems.append(f"sweep.b_values: b = {b:g} violates the b >= 1 constraint")
    w1_values = sweep_sec.get("w1_values", ExperimentConfig.__dataclass_fields__["w1_values"].default_factory())
    try:
        w1_values = [float(w) for w in w1_values]
    except (TypeError, ValueError):
        problems.append("sweep.w1_values: entries must be numbers")
        w1_values = [100e-9]
    for w in w1_values:
        if w <= 0:
            problems.append(f"sweep.w1_values: w1 = {w:g} must be positive")

    protocol = run_sec.get("activation_protocol", "steady_position")
    if protocol not in ("steady_position", "firing_rate"):
        problems.append(f"run.activation_protocol: unknown protocol {protocol!r}")

    network_file = net_sec.get("file")
    spikes_file = net_sec.get("spikes_file")
    if experiment == "network_infer":
        if not network_file:
            problems.append("network.file: required for network_infer")
        elif not os.path.exists(network_file):
            problems.append(f"network.file: {network_file!r} does not exist")
        if spikes_file and not os.path.exists(spikes_file):
            problems.append(f"network.spikes_file: {spikes_file!r} does not exist")
    input_rate = _get(net_sec, "input_rate", 5e7, problems, "network", positive=True)
    network_dt = _get(net_sec, "dt", 1e-9, problems, "network", positive=True)

    seed = _get(doc, "seed", 1234, problems, "config", kind=int)
    threads = _get(doc, "threads", 0, problems, "config", kind=int)
    if threads < 0:
        problems.append("threads: must be >= 0")
    figures = bool(doc.get("figures", True))
    export_mask = bool(doc.get("export_mask", False))
    export_current_map = bool(doc.get("export_current_map", False))

    if problems or shape is None or material is None:
        if shape is None and not any(p.startswith("shape") for p in problems):
            problems.append("shape: could not be constructed")
        raise ConfigError(problems)

    return ExperimentConfig(
        experiment=experiment, output_dir=output_dir, shape=shape,
        material=material, cell_size=cell_size, fixed_margin=fixed_margin,
        t_end=t_end, sample_dt=sample_dt, x_start=x_start, currents=currents,
        b_values=b_values, w1_values=w1_values, activation_protocol=protocol,
        network_file=network_file, spikes_file=spikes_file,
        input_rate=input_rate, network_dt=network_dt, seed=seed,
        threads=threads, figures=figures, export_mask=export_mask,
        export_current_map=export_current_map)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as f:
            doc = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError([f"config file {path!r} not found"])
    except yaml.YAMLError as exc:
        raise ConfigError([f"config parse error: {exc}"])
    return config_from_dict(doc or {})


def apply_overrides(cfg: ExperimentConfig, out_dir: str | None = None,
                    threads: int | None = None,
                    resolution_scale: float | None = None) -> ExperimentConfig:
    if out_dir is not None:
        cfg.output_dir = out_dir
    if threads is not None:
        cfg.threads = threads
    if resolution_scale is not None and resolution_scale != 1.0:
        if resolution_scale <= 0:
            raise ConfigError(["--resolution-scale: must be positive"])
        cfg.resolution_scale = resolution_scale
        cfg.cell_size *= resolution_scale
    return cfg


def validate_config(path: str) -> str:
    """Full static validation; returns a report echoing resolved defaults."""
    cfg = load_config(path)
    lines = ["configuration valid", f"experiment: {cfg.experiment}"]
    resolved = cfg.resolved_dict()
    for key in sorted(resolved):
        lines.append(f"  {key} = {resolved[key]!r}")
    return "\n".join(lines)
