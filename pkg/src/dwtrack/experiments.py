"""Experiment drivers behind the CLI: runs, sweeps, artifacts, manifest."""

from __future__ import annotations

import json
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import analysis, geometry, network, reporting
from .analysis import (linearity_rmse, sigmoidality_check, simulate_integration,
                       simulate_leaking, extract_activation, trace_to_csv,
                       activation_to_csv)
from .config import ExperimentConfig
from .currentmap import export_current_map_csv
from .geometry import ShapeKind, make_track_shape, mask_to_text

VERSION = "0.1.0"


def traversal_time(trace, lo: float, hi: float) -> float | None:
    """Time to cross from one landmark to the other, direction-agnostic [s]."""
    x = trace.x
    t = trace.t
    if len(x) < 2:
        return None
    if x[0] > x[-1]:  # leak: moving toward the wide end
        first = np.nonzero(x <= hi)[0]
        last = np.nonzero(x <= lo)[0]
    else:
        first = np.nonzero(x >= lo)[0]
        last = np.nonzero(x >= hi)[0]
    if len(first) == 0 or len(last) == 0:
        return None
    return float(t[last[0]] - t[first[0]])


def _leak_kwargs(cfg: ExperimentConfig) -> dict:
    return dict(cell_size=cfg.cell_size, fixed_margin=cfg.fixed_margin,
                sample_dt=cfg.sample_dt)


def _sweep_point(task: dict) -> dict:
    """One sweep point, picklable for the worker pool."""
    cfg: ExperimentConfig = task["cfg"]
    kind = task["kind"]
    try:
        if kind == "rmse":
            shape = make_track_shape(ShapeKind.EXPONENTIAL, b=task["b"],
                                     length=cfg.shape.length,
                                     w_wide=cfg.shape.w_wide,
                                     w_narrow=cfg.shape.w_narrow,
                                     thickness=cfg.shape.thickness)
            trace = simulate_leaking(shape, cfg.material, cfg.t_end,
                                     cfg.x_start, **_leak_kwargs(cfg))
            rmse, slope, intercept = linearity_rmse(trace)
            trav = traversal_time(trace, 0.25 * shape.length, 0.75 * shape.length)
            return {"key": task["b"], "trace": trace,
                    "row": {"b": task["b"], "rmse_m": rmse, "slope_m_per_s": slope,
                            "intercept_m": intercept,
                            "mid_traversal_s": trav if trav is not None else ""}}
        if kind == "squash":
            shape = make_track_shape(ShapeKind.CONSTRICTED, w1=task["w1"],
                                     length=cfg.shape.length,
                                     thickness=cfg.shape.thickness,
                                     constriction_width=cfg.shape.constriction_width
                                     or geometry.DEFAULT_CONSTRICTION_WIDTH,
                                     constriction_extent=cfg.shape.constriction_extent
                                     or geometry.DEFAULT_CONSTRICTION_EXTENT)
            trace = simulate_leaking(shape, cfg.material, cfg.t_end,
                                     cfg.x_start, **_leak_kwargs(cfg))
            rep = sigmoidality_check(trace)
            trav = traversal_time(trace, 0.25 * shape.length, 0.75 * shape.length)
            return {"key": task["w1"], "trace": trace,
                    "row": {"w1_m": task["w1"], "inflection_x_m": rep.inflection_x,
                            "max_slope_t_s": rep.max_slope_t,
                            "monotone": int(rep.monotone),
                            "sigmoidal": int(rep.sigmoidal),
                            "mid_traversal_s": trav if trav is not None else ""}}
        if kind == "integrate":
            trace = simulate_integration(cfg.shape, cfg.material, task["current"],
                                         cfg.t_end, cfg.x_start, **_leak_kwargs(cfg))
            return {"key": task["current"], "trace": trace,
                    "row": {"current_A": task["current"],
                            "final_x_m": float(trace.x[-1]) if len(trace.x) else "",
                            "termination": trace.termination}}
        raise ValueError(f"unknown sweep kind {kind}")
    except Exception as exc:  # per-point failures must not abort the sweep
        return {"key": task.get("b", task.get("w1", task.get("current"))),
                "error": f"{type(exc).__name__}: {exc}"}


def _run_sweep(cfg: ExperimentConfig, tasks: list) -> tuple[list, dict]:
    threads = cfg.threads if cfg.threads > 0 else (os.cpu_count() or 1)
    if threads == 1 or len(tasks) == 1:
        results = [_sweep_point(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
            results = list(pool.map(_sweep_point, tasks))
    results.sort(key=lambda r: r["key"])
    failures = {str(r["key"]): r["error"] for r in results if "error" in r}
    return [r for r in results if "error" not in r], failures


def _maybe_debug_exports(cfg: ExperimentConfig, outdir: str,
                         artifacts: list) -> None:
    if cfg.export_mask:
        _, mask = analysis.track_setup(cfg.shape, cfg.cell_size, cfg.fixed_margin)
        path = os.path.join(outdir, "mask.txt")
        with open(path, "w") as f:
            f.write(mask_to_text(mask))
        artifacts.append(path)
    if cfg.export_current_map:
        cmap = analysis.unit_current_map(cfg.shape, cfg.cell_size, cfg.fixed_margin)
        path = os.path.join(outdir, "current_map.csv")
        export_current_map_csv(cmap, path)
        artifacts.append(path)


def run_experiment(cfg: ExperimentConfig) -> tuple[int, list]:
    """Execute the configured experiment; returns (exit status, artifacts)."""
    t_wall = time.time()
    outdir = cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    artifacts: list[str] = []
    failures: dict = {}
    try:
        if cfg.experiment == "leak":
            trace = simulate_leaking(cfg.shape, cfg.material, cfg.t_end,
                                     cfg.x_start, **_leak_kwargs(cfg))
            path = os.path.join(outdir, f"trace_leak_{cfg.shape.label()}.csv")
            trace_to_csv(trace, path)
            artifacts.append(path)
            if cfg.figures:
                fig = os.path.join(outdir, f"trace_leak_{cfg.shape.label()}.png")
                reporting.trace_figure([(cfg.shape.label(), trace.t, trace.x)],
                                       fig, "zero-current leak")
                artifacts.append(fig)

        elif cfg.experiment == "integrate":
            tasks = [{"cfg": cfg, "kind": "integrate", "current": c}
                     for c in cfg.currents]
            results, failures = _run_sweep(cfg, tasks)
            rows, curves = [], []
            for r in results:
                tr = r["trace"]
                path = os.path.join(
                    outdir, f"trace_integrate_{cfg.shape.label()}_"
                            f"{r['key'] * 1e3:g}mA.csv")
                trace_to_csv(tr, path)
                artifacts.append(path)
                rows.append(r["row"])
                curves.append((f"{r['key'] * 1e3:g} mA", tr.t, tr.x))
            path = os.path.join(outdir, "curves.csv")
            reporting.write_curves_csv(path, ["current_A", "final_x_m",
                                              "termination"], rows)
            artifacts.append(path)
            if cfg.figures and curves:
                fig = os.path.join(outdir, "integration.png")
                reporting.trace_figure(curves, fig,
                                       f"integration, {cfg.shape.label()}")
                artifacts.append(fig)

        elif cfg.experiment == "rmse_sweep":
            tasks = [{"cfg": cfg, "kind": "rmse", "b": b} for b in cfg.b_values]
            results, failures = _run_sweep(cfg, tasks)
            rows, curves = [], []
            for r in results:
                tr = r["trace"]
                path = os.path.join(outdir, f"trace_leak_b{r['key']:g}.csv")
                trace_to_csv(tr, path)
                artifacts.append(path)
                rows.append(r["row"])
                curves.append((f"b={r['key']:g}", tr.t, tr.x))
            path = os.path.join(outdir, "curves.csv")
            reporting.write_curves_csv(path, ["b", "rmse_m", "slope_m_per_s",
                                              "intercept_m", "mid_traversal_s"],
                                       rows)
            artifacts.append(path)
            if cfg.figures and rows:
                fig = os.path.join(outdir, "rmse_vs_b.png")
                reporting.curve_figure([r["b"] for r in rows],
                                       [r["rmse_m"] * 1e9 for r in rows],
                                       "b", "leak RMSE (nm)", fig,
                                       "linearity of leaking vs b")
                artifacts.append(fig)
                fig2 = os.path.join(outdir, "leak_family.png")
                reporting.trace_figure(curves, fig2, "leak traces vs b")
                artifacts.append(fig2)

        elif cfg.experiment == "squash_sweep":
            tasks = [{"cfg": cfg, "kind": "squash", "w1": w} for w in cfg.w1_values]
            results, failures = _run_sweep(cfg, tasks)
            rows, curves = [], []
            for r in results:
                tr = r["trace"]
                path = os.path.join(outdir, f"trace_leak_w1_{r['key'] * 1e9:g}nm.csv")
                trace_to_csv(tr, path)
                artifacts.append(path)
                rows.append(r["row"])
                curves.append((f"w1={r['key'] * 1e9:g} nm", tr.t, tr.x))
            path = os.path.join(outdir, "curves.csv")
            reporting.write_curves_csv(path, ["w1_m", "inflection_x_m",
                                              "max_slope_t_s", "monotone",
                                              "sigmoidal", "mid_traversal_s"], rows)
            artifacts.append(path)
            if cfg.figures and curves:
                fig = os.path.join(outdir, "squash_family.png")
                reporting.trace_figure(curves, fig, "squashing neuron leak traces")
                artifacts.append(fig)

        elif cfg.experiment == "activation":
            curve = extract_activation(cfg.shape, cfg.material, cfg.currents,
                                       cfg.activation_protocol,
                                       cell_size=cfg.cell_size,
                                       fixed_margin=cfg.fixed_margin)
            path = os.path.join(outdir, "activation.csv")
            activation_to_csv(curve, path)
            artifacts.append(path)
            if cfg.figures:
                fig = os.path.join(outdir, "activation.png")
                ylabel = ("normalized steady position"
                          if curve.mode == "steady_position" else "rate (Hz)")
                reporting.curve_figure(curve.currents * 1e3, curve.outputs,
                                       "input current (mA)", ylabel, fig,
                                       f"activation, {cfg.shape.label()}")
                artifacts.append(fig)

        elif cfg.experiment == "network_infer":
            net = network.load_network(cfg.network_file)
            if cfg.spikes_file:
                spikes = network.spikes_from_csv(cfg.spikes_file, net.n_inputs)
            else:
                rng = np.random.default_rng(cfg.seed)
                channels = []
                for _ in range(net.n_inputs):
                    gaps = rng.exponential(1.0 / cfg.input_rate,
                                           size=max(4, int(cfg.t_end * cfg.input_rate * 3)))
                    times = np.cumsum(gaps)
                    channels.append(times[times < cfg.t_end])
                spikes = network.SpikeTrain(channels=channels)
                path = os.path.join(outdir, "input_spikes.csv")
                network.spikes_to_csv(spikes, path)
                artifacts.append(path)
            result = network.infer(net, spikes, cfg.t_end, cfg.network_dt)
            out_train = network.SpikeTrain(channels=result.times)
            path = os.path.join(outdir, "output_spikes.csv")
            network.spikes_to_csv(out_train, path)
            artifacts.append(path)
            path = os.path.join(outdir, "curves.csv")
            reporting.write_curves_csv(path, ["channel", "spike_count"],
                                       [{"channel": ch, "spike_count": int(c)}
                                        for ch, c in enumerate(result.counts)])
            artifacts.append(path)
            if cfg.figures:
                fig = os.path.join(outdir, "raster.png")
                reporting.raster_figure(result.times, fig, "output spikes")
                artifacts.append(fig)
        else:
            raise ValueError(f"unknown experiment {cfg.experiment!r}")

        _maybe_debug_exports(cfg, outdir, artifacts)
        status = 0
    except Exception:
        failures["experiment"] = traceback.format_exc(limit=4)
        status = 2

    manifest = {
        "experiment": cfg.experiment,
        "config": cfg.resolved_dict(),
        "code_version": VERSION,
        "wall_clock_s": time.time() - t_wall,
        "artifacts": [os.path.basename(a) for a in artifacts],
        "failures": failures,
    }
    with open(os.path.join(outdir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return status, artifacts
