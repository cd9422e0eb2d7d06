"""Discrete-time spiking network simulation.

Neurons are updated synchronously on a global step. Two neuron models are
provided: leaky integrate-and-fire (LIF) for classification networks and
encoders, and resonate-and-fire (R&F) for spectral analysis.

A network is a chain of layers. At step ``t`` layer ``l`` receives

    W_l @ s_{l-1}(t) + bias_l + Lat_l @ s_l(t-1)

so a spike propagates through the whole feed-forward chain within one step
while lateral connections act with a one-step delay.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ShapeError

RESET_MODES = ("subtract", "zero")


@dataclass(frozen=True)
class LifParams:
    decay: float = 1.0
    threshold: float = 1.0
    reset_mode: str = "subtract"
    refractory: int = 0
    # initial membrane voltage, in units of the threshold
    v_init: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.decay <= 1.0:
            raise DomainError(f"decay must lie in [0, 1], got {self.decay}")
        if not self.threshold > 0:
            raise DomainError(f"threshold must be positive, got {self.threshold}")
        if self.reset_mode not in RESET_MODES:
            raise DomainError(f"unknown reset mode {self.reset_mode!r}")
        if int(self.refractory) != self.refractory or self.refractory < 0:
            raise DomainError(f"refractory must be a non-negative integer, got {self.refractory}")
        if not np.isfinite(self.v_init):
            raise DomainError("v_init must be finite")


@dataclass(frozen=True)
class RfParams:
    omega: float
    damping: float = 1.0
    threshold: float = 1.0
    phase_tol: float = 0.1

    def __post_init__(self):
        if not np.isfinite(self.omega):
            raise DomainError("omega must be finite")
        if not 0.0 < self.damping <= 1.0:
            raise DomainError(f"damping must lie in (0, 1], got {self.damping}")
        if not self.threshold > 0:
            raise DomainError(f"threshold must be positive, got {self.threshold}")
        if not 0.0 < self.phase_tol < np.pi:
            raise DomainError(f"phase_tol must lie in (0, pi), got {self.phase_tol}")


def _unwrap(x):
    x = np.asarray(x)
    return x[()] if x.ndim == 0 else x


def lif_step(v, current, params: LifParams, refrac=0):
    """Advance LIF neurons by one step.

    Works elementwise on scalars or arrays. Returns ``(v, spike, refrac)``;
    neurons with a positive refractory counter ignore their input, hold their
    voltage and stay silent while the counter runs down.
    """
    v = np.asarray(v, dtype=float)
    current = np.asarray(current, dtype=float)
    refrac = np.asarray(refrac, dtype=np.int64)
    if not np.all(np.isfinite(current)):
        raise DomainError("non-finite input current")
    if not np.all(np.isfinite(v)):
        raise DomainError("non-finite membrane state")
    v_new, spike, refrac_new = _lif_update(v, current, params, refrac)
    return _unwrap(v_new), _unwrap(spike.astype(np.uint8)), _unwrap(refrac_new)


def _lif_update(v, current, params: LifParams, refrac):
    active = refrac <= 0
    v_new = np.where(active, params.decay * v + current, v)
    spike = active & (v_new >= params.threshold)
    if params.reset_mode == "subtract":
        v_new = np.where(spike, v_new - params.threshold, v_new)
    else:
        v_new = np.where(spike, 0.0, v_new)
    refrac_new = np.where(spike, params.refractory, np.maximum(refrac - 1, 0))
    return v_new, spike, refrac_new


def rf_step(z, current, params: RfParams):
    """Advance resonate-and-fire neurons by one step.

    ``z' = damping * exp(i*omega) * z + current``; a spike is emitted when the
    real part of ``z'`` reaches the threshold while its phase is within
    ``phase_tol`` of zero. The state is not reset by a spike.
    """
    z = np.asarray(z, dtype=complex)
    current = np.asarray(current)
    if not np.all(np.isfinite(current)):
        raise DomainError("non-finite input current")
    if not np.all(np.isfinite(z)):
        raise DomainError("non-finite resonator state")
    z_new = params.damping * np.exp(1j * params.omega) * z + current
    spike = rf_spike(z_new, params.threshold, params.phase_tol)
    return _unwrap(z_new), _unwrap(spike.astype(np.uint8))


def rf_spike(z, threshold, phase_tol):
    z = np.asarray(z)
    return (z.real >= threshold) & (np.abs(np.angle(z)) <= phase_tol)


@dataclass
class Layer:
    params: LifParams
    weights: np.ndarray
    lateral: np.ndarray | None = None
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        n_out = self.weights.shape[0]
        if self.lateral is not None:
            self.lateral = np.asarray(self.lateral, dtype=float)
            if self.lateral.shape != (n_out, n_out):
                raise ShapeError(f"lateral matrix must be {n_out}x{n_out}, got {self.lateral.shape}")
            if np.any(np.diag(self.lateral) != 0):
                raise ShapeError("lateral matrix must have a zero diagonal")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=float).reshape(-1)
            if self.bias.shape != (n_out,):
                raise ShapeError(f"bias must have length {n_out}, got {self.bias.shape}")
        for arr in (self.weights, self.lateral, self.bias):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise DomainError("layer parameters must be finite")

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]


@dataclass
class SpikingNetwork:
    layers: list[Layer]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("a network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.n_in != prev.n_out:
                raise ShapeError(
                    f"layer fan-in {nxt.n_in} does not match previous layer size {prev.n_out}"
                )

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def sizes(self) -> list[int]:
        return [self.n_in] + [layer.n_out for layer in self.layers]

    def to_dict(self) -> dict:
        out = {"sizes": self.sizes, "meta": self.meta, "layers": []}
        for layer in self.layers:
            p = layer.params
            out["layers"].append(
                {
                    "params": {
                        "decay": p.decay,
                        "threshold": p.threshold,
                        "reset_mode": p.reset_mode,
                        "refractory": int(p.refractory),
                        "v_init": p.v_init,
                    },
                    "weights": layer.weights.tolist(),
                    "lateral": None if layer.lateral is None else layer.lateral.tolist(),
                    "bias": None if layer.bias is None else layer.bias.tolist(),
                }
            )
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "SpikingNetwork":
        layers = []
        for entry in doc["layers"]:
            layers.append(
                Layer(
                    params=LifParams(**entry["params"]),
                    weights=np.array(entry["weights"], dtype=float),
                    lateral=None if entry.get("lateral") is None else np.array(entry["lateral"]),
                    bias=None if entry.get("bias") is None else np.array(entry["bias"]),
                )
            )
        net = cls(layers, meta=dict(doc.get("meta", {})))
        if "sizes" in doc and list(doc["sizes"]) != net.sizes:
            raise ShapeError("declared sizes disagree with weight shapes")
        return net

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "SpikingNetwork":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SimTrace:
    """Output of :func:`run_network`.

    ``rasters`` holds one ``(n, T)`` array per layer, or ``(B, n, T)`` when a
    batch was simulated; the counters are totals over the whole batch.
    """

    rasters: list[np.ndarray]
    spike_count: int
    syn_events: int
    neuron_updates: int
    steps: int
    final_v: list[np.ndarray] = field(default_factory=list, repr=False)

    @classmethod
    def empty(cls) -> "SimTrace":
        return cls(rasters=[], spike_count=0, syn_events=0, neuron_updates=0, steps=0)

    def counters(self) -> dict:
        return {
            "spikes": self.spike_count,
            "syn_events": self.syn_events,
            "neuron_updates": self.neuron_updates,
            "steps": self.steps,
        }


def count_events(trace: SimTrace) -> tuple[int, int, int]:
    return trace.spike_count, trace.syn_events, trace.neuron_updates


COUNTER_FIELDS = ("label", "spikes", "syn_events", "neuron_updates", "steps")


def write_counters_csv(path, rows: Iterable[tuple[str, SimTrace]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COUNTER_FIELDS)
        for label, trace in rows:
            c = trace.counters()
            writer.writerow([label, c["spikes"], c["syn_events"], c["neuron_updates"], c["steps"]])


def read_counters_csv(path) -> list[tuple[str, dict]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            (row["label"], {k: int(row[k]) for k in COUNTER_FIELDS[1:]})
            for row in reader
        ]


def fan_out(net: SpikingNetwork) -> list[np.ndarray]:
    """Outgoing connection counts: entry 0 for the input channels, then one per layer."""
    outs = [np.count_nonzero(net.layers[0].weights, axis=0)]
    for i, layer in enumerate(net.layers):
        n = np.zeros(layer.n_out, dtype=np.int64)
        if i + 1 < len(net.layers):
            n += np.count_nonzero(net.layers[i + 1].weights, axis=0)
        if layer.lateral is not None:
            n += np.count_nonzero(layer.lateral, axis=0)
        outs.append(n)
    return outs


def run_network(
    net: SpikingNetwork,
    inputs,
    horizon: int | None = None,
    input_kernel: str = "spike",
) -> SimTrace:
    """Simulate ``net`` on a binary input raster.

    ``inputs`` is ``(N, T)`` or a batch ``(B, N, T)``; a horizon longer than
    ``T`` pads with silence. With ``input_kernel="latch"`` an input synapse
    keeps delivering its weight on every step after its channel first spikes
    (a non-decaying synaptic current, used for time-to-first-spike inputs);
    synaptic events are still counted per input spike.
    """
    x = np.asarray(inputs)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3:
        raise ShapeError(f"input raster must be 2-D or 3-D, got shape {x.shape}")
    if not np.all((x == 0) | (x == 1)):
        raise DomainError("input raster must be binary")
    batch, n_in, t_in = x.shape
    if n_in != net.n_in:
        raise ShapeError(f"input has {n_in} channels, network expects {net.n_in}")
    steps = t_in if horizon is None else int(horizon)
    if steps < 1:
        raise DomainError("horizon must be at least 1 step")
    if steps > t_in:
        x = np.concatenate([x, np.zeros((batch, n_in, steps - t_in), dtype=x.dtype)], axis=2)
    else:
        x = x[:, :, :steps]
    x = x.astype(np.uint8)
    if input_kernel == "latch":
        drive = np.maximum.accumulate(x, axis=2).astype(float)
    elif input_kernel == "spike":
        drive = x.astype(float)
    else:
        raise DomainError(f"unknown input kernel {input_kernel!r}")

    n_layers = len(net.layers)
    v = [np.full((batch, l.n_out), l.params.v_init * l.params.threshold) for l in net.layers]
    refrac = [np.zeros((batch, l.n_out), dtype=np.int64) for l in net.layers]
    prev = [np.zeros((batch, l.n_out), dtype=bool) for l in net.layers]
    rasters = [np.zeros((batch, l.n_out, steps), dtype=np.uint8) for l in net.layers]

    for t in range(steps):
        upstream = drive[:, :, t]
        for i, layer in enumerate(net.layers):
            current = upstream @ layer.weights.T
            if layer.bias is not None:
                current = current + layer.bias
            if layer.lateral is not None:
                current = current + prev[i] @ layer.lateral.T
            v[i], spike, refrac[i] = _lif_update(v[i], current, layer.params, refrac[i])
            prev[i] = spike
            rasters[i][:, :, t] = spike
            upstream = spike.astype(float)

    outs = fan_out(net)
    syn = int(np.sum(x.sum(axis=(0, 2), dtype=np.int64) * outs[0]))
    spikes = 0
    for i in range(n_layers):
        per_neuron = rasters[i].sum(axis=(0, 2), dtype=np.int64)
        spikes += int(per_neuron.sum())
        syn += int(np.sum(per_neuron * outs[i + 1]))
    updates = batch * steps * sum(l.n_out for l in net.layers)
    if single:
        rasters = [r[0] for r in rasters]
        v = [vv[0] for vv in v]
    return SimTrace(
        rasters=rasters,
        spike_count=spikes,
        syn_events=syn,
        neuron_updates=updates,
        steps=steps,
        final_v=v,
    )


def dense_network(sizes: Sequence[int], weights: Sequence, params: LifParams | None = None,
                  biases: Sequence | None = None) -> SpikingNetwork:
    """Build a plain feed-forward network with shared neuron parameters."""
    params = params or LifParams()
    layers = []
    for i, w in enumerate(weights):
        b = None if biases is None else biases[i]
        layers.append(Layer(params=params, weights=np.asarray(w, dtype=float), bias=b))
    net = SpikingNetwork(layers)
    if net.sizes != list(sizes):
        raise ShapeError(f"weights imply sizes {net.sizes}, expected {list(sizes)}")
    return net
