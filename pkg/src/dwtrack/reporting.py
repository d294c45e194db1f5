"""CSV and figure output for experiment runs.

CSV schemas are versioned in a leading comment line so downstream plotting
stays stable; figures are rendered headless to PNG next to the data.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

NM = 1e9
NS = 1e9


def write_curves_csv(path: str, fieldnames: list, rows: list) -> None:
    """Rows are dicts keyed by fieldnames; floats serialized with %.12g."""
    with open(path, "w") as f:
        f.write("# dwtrack curves v1\n")
        f.write(",".join(fieldnames) + "\n")
        for row in rows:
            cells = []
            for name in fieldnames:
                v = row.get(name, "")
                if isinstance(v, float):
                    cells.append(f"{v:.12g}")
                else:
                    cells.append(str(v))
            f.write(",".join(cells) + "\n")


def trace_figure(traces: list, path: str, title: str) -> None:
    """traces: list of (label, t array [s], x array [m])."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, t, x in traces:
        ax.plot(t * NS, x * NM, lw=1.2, label=label)
    ax.set_xlabel("time (ns)")
    ax.set_ylabel("wall position (nm)")
    ax.set_title(title)
    if len(traces) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def curve_figure(xs, ys, xlabel: str, ylabel: str, path: str, title: str) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.plot(xs, ys, "o-", ms=4)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def raster_figure(channel_times: list, path: str, title: str) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 3.2))
    for ch, times in enumerate(channel_times):
        if len(times):
            ax.scatter([t * NS for t in times], [ch] * len(times), s=6, marker="|")
    ax.set_xlabel("time (ns)")
    ax.set_ylabel("output channel")
    ax.set_title(title)
    ax.set_yticks(range(len(channel_times)))
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
