"""Crossbar-connected layers of reduced wall neurons: spiking inference.

An M x N crossbar delivers, to output neuron j, the current
I_j = sum over active inputs i of v_pulse * G[i][j]. Spikes are
rectangular current pulses of fixed width; an output spike becomes an
input pulse of the next layer with zero latency (the MTJ read circuitry
is abstracted away).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .reduced import (NeuronModel, NeuronState, model_from_dict, model_to_dict,
                      step_neuron)


@dataclass
class Crossbar:
    conductances: np.ndarray    # (M, N) [S], non-negative
    v_pulse: float = 0.1        # [V] applied per input spike
    pulse_width: float = 1e-9   # [s]

    def __post_init__(self):
        self.conductances = np.asarray(self.conductances, dtype=float)
        if self.conductances.ndim != 2:
            raise ValueError("conductances must be an M x N matrix")
        if np.any(self.conductances < 0):
            raise ValueError("conductances must be non-negative")
        if self.v_pulse <= 0 or self.pulse_width <= 0:
            raise ValueError("v_pulse and pulse_width must be positive")

    @property
    def m(self) -> int:
        return self.conductances.shape[0]

    @property
    def n(self) -> int:
        return self.conductances.shape[1]


@dataclass
class SpikeTrain:
    """Per-channel sorted spike times [s]."""

    channels: list

    def __post_init__(self):
        self.channels = [np.asarray(c, dtype=float) for c in self.channels]
        for k, c in enumerate(self.channels):
            if np.any(c < 0):
                raise ValueError(f"channel {k}: spike times must be non-negative")
            if len(c) > 1 and not np.all(np.diff(c) > 0):
                raise ValueError(f"channel {k}: spike times must be strictly increasing")

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def earliest(self) -> float:
        times = [c[0] for c in self.channels if len(c)]
        return min(times) if times else float("inf")


@dataclass
class Network:
    """Ordered (crossbar, neuron layer) pairs; adjacent dimensions must chain."""

    layers: list  # list[tuple[Crossbar, list[NeuronModel]]]

    def __post_init__(self):
        for k, (xbar, models) in enumerate(self.layers):
            if xbar.n != len(models):
                raise ValueError(f"layer {k}: crossbar has {xbar.n} outputs but "
                                 f"{len(models)} neurons")
            if k > 0 and self.layers[k - 1][0].n != xbar.m:
                raise ValueError(f"layer {k}: expects {xbar.m} inputs but the "
                                 f"previous layer provides {self.layers[k - 1][0].n}")

    @property
    def n_inputs(self) -> int:
        return self.layers[0][0].m

    @property
    def n_outputs(self) -> int:
        return self.layers[-1][0].n

    def total_synapses(self) -> int:
        return sum(x.m * x.n for x, _ in self.layers)


@dataclass
class InferenceResult:
    counts: np.ndarray     # spikes per output channel
    times: list            # list of per-channel time lists [s]
    layer_counts: list = field(default_factory=list)


def layer_step(crossbar: Crossbar, models: list, states: list,
               active_inputs: set, dt: float) -> set:
    """Advance one layer by dt; returns the set of output channels that fired."""
    if dt > crossbar.pulse_width * (1 + 1e-12):
        raise ValueError("dt must not exceed the pulse width")
    if len(models) != crossbar.n or len(states) != crossbar.n:
        raise ValueError("layer size does not match the crossbar")
    if active_inputs:
        rows = sorted(active_inputs)
        if rows[0] < 0 or rows[-1] >= crossbar.m:
            raise ValueError("active input channel out of range")
        currents = crossbar.v_pulse * crossbar.conductances[rows].sum(axis=0)
    else:
        currents = np.zeros(crossbar.n)
    fired = set()
    for j in range(crossbar.n):
        _, f = step_neuron(models[j], states[j], float(currents[j]), dt)
        if f:
            fired.add(j)
    return fired


def infer(network: Network, spikes: SpikeTrain, t_end: float,
          dt: float = 1e-9) -> InferenceResult:
    """Feed a spike train through the network with fixed-step evaluation.

    Neurons start from their steady-leak (reset) positions. The step is
    capped at the smallest pulse width so no pulse is skipped over.
    """
    if spikes.n_channels != network.n_inputs:
        raise ValueError(f"input train has {spikes.n_channels} channels; the "
                         f"first crossbar expects {network.n_inputs}")
    dt = min(dt, min(x.pulse_width for x, _ in network.layers))
    states = [[NeuronState(x=m.reset_x) for m in models]
              for _, models in network.layers]
    # active pulse bookkeeping: per layer, per channel, list of start times
    events: list = [[list(c) for c in spikes.channels]]
    for xbar, _ in network.layers[:-1]:
        events.append([[] for _ in range(xbar.n)])

    out_times: list = [[] for _ in range(network.n_outputs)]
    layer_counts = [0 for _ in network.layers]
    n_steps = int(np.ceil(t_end / dt - 1e-12))
    for step_i in range(n_steps):
        t = step_i * dt
        for k, (xbar, models) in enumerate(network.layers):
            active = {ch for ch, starts in enumerate(events[k])
                      if any(s <= t < s + xbar.pulse_width for s in starts)}
            fired = layer_step(xbar, models, states[k], active, dt)
            layer_counts[k] += len(fired)
            for ch in sorted(fired):
                if k + 1 < len(network.layers):
                    events[k + 1][ch].append(t)  # zero-latency propagation
                else:
                    out_times[ch].append(states[k][ch].fired_at[-1])
    counts = np.array([len(ts) for ts in out_times])
    return InferenceResult(counts=counts, times=out_times,
                           layer_counts=layer_counts)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def network_to_json(network: Network) -> str:
    doc = {"layers": [{
        "conductances": x.conductances.tolist(),
        "v_pulse": x.v_pulse,
        "pulse_width": x.pulse_width,
        "neurons": [model_to_dict(m) for m in models],
    } for x, models in network.layers]}
    return json.dumps(doc, indent=2, sort_keys=True)


def network_from_json(text: str) -> Network:
    doc = json.loads(text)
    layers = []
    for layer in doc["layers"]:
        xbar = Crossbar(conductances=np.asarray(layer["conductances"]),
                        v_pulse=layer["v_pulse"],
                        pulse_width=layer["pulse_width"])
        models = [model_from_dict(d) for d in layer["neurons"]]
        layers.append((xbar, models))
    return Network(layers=layers)


def save_network(network: Network, path: str) -> None:
    with open(path, "w") as f:
        f.write(network_to_json(network))


def load_network(path: str) -> Network:
    with open(path) as f:
        return network_from_json(f.read())


def spikes_to_csv(spikes: SpikeTrain, path: str) -> None:
    with open(path, "w") as f:
        f.write("# dwtrack spikes v1\n")
        f.write("channel,time_seconds\n")
        for ch, times in enumerate(spikes.channels):
            for t in times:
                f.write(f"{ch},{t:.12g}\n")


def spikes_from_csv(path: str, n_channels: int) -> SpikeTrain:
    channels: list = [[] for _ in range(n_channels)]
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("channel"):
                continue
            ch_s, t_s = line.split(",")
            ch = int(ch_s)
            if not 0 <= ch < n_channels:
                raise ValueError(f"spike channel {ch} out of range")
            channels[ch].append(float(t_s))
    return SpikeTrain(channels=[sorted(c) for c in channels])
