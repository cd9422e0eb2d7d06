"""Flexible-payload resource management as a classification task.

A payload configuration assigns one (power, bandwidth) pair to each beam.
The label of a traffic-demand map is the feasible configuration whose offered
capacity is closest, in L1 over beams, to the aggregated per-beam demand.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ann import DenseNet, TrainConfig, convert_to_snn, count_macs, predict, snn_classify, train_sgd
from .codec import encode_lif_stream
from .errors import ConfigError, DomainError, ShapeError
from .snn import LifParams, SimTrace

SE_CAP = 6.0  # bit/s/Hz


@dataclass
class PayloadConfig:
    power: np.ndarray      # W, per beam
    bandwidth: np.ndarray  # MHz, per beam

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.power.tolist(), self.bandwidth.tolist()))


@dataclass
class ConfigPool:
    """Feasible configurations, ``configs[c, k] = (P_k, W_k)``."""

    configs: np.ndarray
    counts: np.ndarray | None = None

    def __post_init__(self):
        self.configs = np.asarray(self.configs, dtype=float).reshape(len(self.configs), -1, 2)
        if self.counts is None:
            self.counts = np.zeros(len(self.configs), dtype=np.int64)
        if len({c.tobytes() for c in self.configs}) != len(self.configs):
            raise ConfigError("configuration pool contains duplicates")

    def __len__(self) -> int:
        return len(self.configs)

    def __getitem__(self, i) -> PayloadConfig:
        return PayloadConfig(self.configs[i, :, 0].copy(), self.configs[i, :, 1].copy())

    @property
    def beams(self) -> int:
        return self.configs.shape[1]

    def to_dict(self) -> dict:
        return {"configs": self.configs.tolist(), "counts": self.counts.tolist()}

    @classmethod
    def from_dict(cls, doc) -> "ConfigPool":
        return cls(np.array(doc["configs"]), np.array(doc["counts"], dtype=np.int64))


@dataclass
class BeamModel:
    """``assignment[i, j]`` is the beam serving grid point (i, j), or -1 outside service."""

    assignment: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        self.gamma = np.asarray(self.gamma, dtype=float).reshape(-1)
        if np.any(self.gamma <= 0):
            raise DomainError("SNR-per-Watt coefficients must be positive")
        if self.assignment.max() >= self.gamma.size or self.assignment.min() < -1:
            raise ShapeError("beam assignment refers to a non-existent beam")

    @property
    def beams(self) -> int:
        return self.gamma.size

    @property
    def mask(self) -> np.ndarray:
        return self.assignment >= 0

    @classmethod
    def tiled(cls, shape, beams: int, mask=None, gamma=1.0) -> "BeamModel":
        """Split the grid into a near-square tiling of ``beams`` rectangular blocks."""
        rows = int(math.floor(math.sqrt(beams)))
        while beams % rows:
            rows -= 1
        cols = beams // rows
        h, w = shape
        ri = np.minimum(np.arange(h) * rows // h, rows - 1)
        ci = np.minimum(np.arange(w) * cols // w, cols - 1)
        assign = ri[:, None] * cols + ci[None, :]
        if mask is not None:
            assign = np.where(np.asarray(mask, dtype=bool), assign, -1)
        gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (beams,)).copy()
        return cls(assign, gamma)

    def aggregate(self, grids) -> np.ndarray:
        """Per-beam demand ``d_k`` for one grid ``(H, W)`` or a stack ``(S, H, W)``."""
        g = np.asarray(grids, dtype=float)
        flat = g.reshape(*g.shape[:-2], -1)
        onehot = (self.assignment.reshape(-1)[:, None] == np.arange(self.beams)[None, :]).astype(float)
        return flat @ onehot

    def to_dict(self) -> dict:
        return {"assignment": self.assignment.tolist(), "gamma": self.gamma.tolist()}


def service_disc(shape) -> np.ndarray:
    """Boolean service mask: the disc inscribed in the grid."""
    h, w = shape
    i, j = np.meshgrid(np.arange(h) + 0.5 - h / 2, np.arange(w) + 0.5 - w / 2, indexing="ij")
    return (i / (h / 2)) ** 2 + (j / (w / 2)) ** 2 <= 1.0


def enumerate_feasible(powers, bandwidths, beams: int, p_total: float, w_total: float) -> ConfigPool:
    """All per-beam assignments meeting both sum constraints, in lexicographic order."""
    powers = sorted(set(float(p) for p in powers))
    bandwidths = sorted(set(float(w) for w in bandwidths))
    if not powers or not bandwidths or beams < 1:
        raise ConfigError("power and bandwidth sets must be non-empty and beams >= 1")
    pairs = np.array([(p, w) for p in powers for w in bandwidths])
    idx = np.indices((len(pairs),) * beams).reshape(beams, -1).T
    configs = pairs[idx]
    ok = (configs[:, :, 0].sum(axis=1) <= p_total + 1e-9) & (configs[:, :, 1].sum(axis=1) <= w_total + 1e-9)
    if not ok.any():
        raise ConfigError("no payload configuration satisfies the power and bandwidth totals")
    return ConfigPool(configs[ok])


def offered_capacity(config, model: BeamModel) -> np.ndarray:
    """``c_k = W_k * min(log2(1 + gamma_k P_k), 6)`` in Mbps (W in MHz).

    Accepts a :class:`PayloadConfig`, a ``(K, 2)`` array or a ``(C, K, 2)`` stack.
    """
    if isinstance(config, PayloadConfig):
        arr = np.stack([config.power, config.bandwidth], axis=-1)
    else:
        arr = np.asarray(config, dtype=float)
    se = np.minimum(np.log2(1.0 + model.gamma * arr[..., 0]), SE_CAP)
    return arr[..., 1] * se


def mismatch(demand_per_beam, capacities) -> np.ndarray:
    """L1 mismatch ``(S, C)`` between demands ``(S, K)`` and capacities ``(C, K)``."""
    d = np.atleast_2d(demand_per_beam)
    out = np.zeros((d.shape[0], capacities.shape[0]))
    for k in range(capacities.shape[1]):
        out += np.abs(d[:, k:k + 1] - capacities[None, :, k])
    return out


def label_oracle(demand, pool: ConfigPool, model: BeamModel, chunk: int = 256, threads: int = 1):
    """Index of the configuration minimizing L1 demand-capacity mismatch (lowest on ties).

    ``demand`` is a grid ``(H, W)`` (returns an int) or a stack ``(S, H, W)``.
    """
    d = np.asarray(demand, dtype=float)
    single = d.ndim == 2
    per_beam = model.aggregate(d[None] if single else d)
    caps = offered_capacity(pool.configs, model)

    def work(start):
        return np.argmin(mismatch(per_beam[start:start + chunk], caps), axis=1)

    starts = range(0, per_beam.shape[0], chunk)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    labels = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
    return int(labels[0]) if single else labels


def oracle_mismatch(demand, pool: ConfigPool, model: BeamModel) -> np.ndarray:
    """Best achievable mismatch per sample for the given pool."""
    per_beam = model.aggregate(np.asarray(demand, dtype=float))
    return mismatch(per_beam, offered_capacity(pool.configs, model)).min(axis=1)


def prune_pool(pool: ConfigPool, demands, model: BeamModel, keep_fraction: float, threads: int = 1):
    """Keep the ``ceil(keep_fraction*|pool|)`` most selected configurations.

    Returns the pruned pool (original relative order, selection counts
    attached) and a map from old index to new index (-1 when removed).
    """
    if not 0 < keep_fraction <= 1:
        raise DomainError("keep_fraction must lie in (0, 1]")
    labels = label_oracle(demands, pool, model, threads=threads)
    counts = np.bincount(labels, minlength=len(pool))
    keep_n = int(math.ceil(keep_fraction * len(pool) - 1e-9))
    if keep_n < 1:
        raise ConfigError("pruning would leave an empty pool")
    order = sorted(range(len(pool)), key=lambda c: (-counts[c], c))
    kept = np.sort(np.array(order[:keep_n], dtype=np.int64))
    remap = np.full(len(pool), -1, dtype=np.int64)
    remap[kept] = np.arange(kept.size)
    return ConfigPool(pool.configs[kept], counts[kept]), remap


@dataclass
class DemandDataset:
    grids: np.ndarray  # (S, H, W), Mbps
    mask: np.ndarray
    tau: np.ndarray
    envelope: np.ndarray  # (S, hotspots) diurnal amplitude factors
    params: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.grids.shape[0]


def diurnal_envelope(tau, phases, period: float, depth: float) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    return 1.0 + depth * np.sin(2 * np.pi * tau[:, None] / period + np.asarray(phases)[None, :])


def generate_demands(shape=(16, 16), beams: int = 4, steps: int = 1000, seed: int = 42,
                     hotspots: int | None = None, period: float = 96.0, depth: float = 0.8,
                     noise: float = 0.05, mean_total: float = 1200.0, mask=None) -> DemandDataset:
    """Gaussian traffic hotspots with diurnal amplitudes and multiplicative noise.

    Hotspot centres, widths, weights and phases are drawn once per seed; each
    time step scales the hotspots by ``1 + depth*sin(2 pi tau/period + phase)``
    and multiplies every grid point by ``max(0, 1 + noise*N(0, 1))``. Totals
    average ``mean_total`` Mbps. By default there is one hotspot per beam.
    """
    hotspots = beams if hotspots is None else hotspots
    rng = np.random.default_rng(seed)
    h, w = shape
    mask = service_disc(shape) if mask is None else np.asarray(mask, dtype=bool)
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    centres = rng.uniform([0, 0], [h - 1, w - 1], size=(hotspots, 2))
    widths = rng.uniform(1.5, 3.5, size=hotspots)
    weights = rng.uniform(0.5, 1.5, size=hotspots)
    phases = rng.uniform(0, 2 * np.pi, size=hotspots)
    bumps = np.exp(-((ii[None] - centres[:, 0, None, None]) ** 2 + (jj[None] - centres[:, 1, None, None]) ** 2)
                   / (2 * widths[:, None, None] ** 2))
    bumps = bumps * mask[None]
    base = weights[:, None, None] * bumps / bumps.sum(axis=(1, 2), keepdims=True)
    tau = np.arange(steps)
    env = diurnal_envelope(tau, phases, period, depth)
    field_ = np.einsum("sh,hij->sij", env, base)
    field_ *= mean_total / weights.sum()
    jitter = np.maximum(0.0, 1.0 + noise * rng.normal(size=field_.shape))
    grids = field_ * jitter * mask[None]
    params = {"shape": list(shape), "beams": beams, "steps": steps, "seed": seed, "hotspots": hotspots,
              "period": period, "depth": depth, "noise": noise, "mean_total": mean_total}
    return DemandDataset(grids, mask, tau, env, params)


@dataclass
class RrmScenario:
    shape: tuple = (16, 16)
    beams: int = 4
    powers: tuple = (10.0, 20.0, 40.0)
    bandwidths: tuple = (100.0, 200.0, 400.0)
    p_total: float = 80.0
    w_total: float = 800.0
    gamma: float = 0.2
    max_classes: int = 32
    samples: int = 1000
    mean_total: float = 1200.0
    hidden: int = 64

    @classmethod
    def from_dict(cls, doc) -> "RrmScenario":
        doc = dict(doc)
        for key in ("shape", "powers", "bandwidths"):
            if key in doc:
                doc[key] = tuple(doc[key])
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


@dataclass
class RrmSetup:
    scenario: RrmScenario
    model: BeamModel
    pool: ConfigPool
    full_pool_size: int
    data: DemandDataset
    labels: np.ndarray


def build_setup(sc: RrmScenario, seed: int = 42, threads: int = 1) -> RrmSetup:
    """Generate demands, enumerate and prune the pool, and label every sample."""
    data = generate_demands(sc.shape, sc.beams, sc.samples, seed, mean_total=sc.mean_total)
    model = BeamModel.tiled(sc.shape, sc.beams, data.mask, sc.gamma)
    full = enumerate_feasible(sc.powers, sc.bandwidths, sc.beams, sc.p_total, sc.w_total)
    keep = min(1.0, sc.max_classes / len(full))
    pool, _ = prune_pool(full, data.grids, model, keep, threads=threads)
    labels = label_oracle(data.grids, pool, model, threads=threads)
    return RrmSetup(sc, model, pool, len(full), data, labels)


DEFAULT_TRAIN = TrainConfig(lr=0.01, epochs=150, batch_size=32, seed=0, momentum=0.9)


@dataclass
class RrmModel:
    ann: DenseNet
    hi: np.ndarray  # per grid point training maximum, 1 where always zero
    curve: list

    def normalize(self, grids) -> np.ndarray:
        g = np.asarray(grids, dtype=float)
        return np.clip(g.reshape(g.shape[0], -1) / self.hi, 0.0, 1.0)


def split_indices(n: int, seed, train_fraction: float = 0.8):
    order = np.random.default_rng(seed).permutation(n)
    cut = int(round(train_fraction * n))
    return np.sort(order[:cut]), np.sort(order[cut:])


def train_classifier(setup: RrmSetup, train_idx, cfg: TrainConfig = DEFAULT_TRAIN) -> RrmModel:
    grids = setup.data.grids[train_idx]
    hi = grids.reshape(grids.shape[0], -1).max(axis=0)
    model = RrmModel(None, np.where(hi > 0, hi, 1.0), [])
    n_in = int(np.prod(setup.scenario.shape))
    net = DenseNet.init([n_in, setup.scenario.hidden, len(setup.pool)], seed=cfg.seed)
    model.ann, model.curve = train_sgd(net, model.normalize(grids), setup.labels[train_idx], cfg)
    return model


def lif_encode_maps(values, steps: int, params: LifParams | None = None) -> np.ndarray:
    """Encode normalized maps ``(S, n)``: each point drives an LIF encoder with
    its demand held constant over the ``steps`` encoding window."""
    params = params or LifParams(decay=1.0, threshold=1.0)
    out = np.empty((values.shape[0], values.shape[1], steps), dtype=np.uint8)
    for s, v in enumerate(values):
        out[s] = encode_lif_stream(np.repeat(v[:, None], steps, axis=1), params)
    return out


def run_pipeline(setup: RrmSetup, mode: str = "ann", steps: int = 64, model: RrmModel | None = None,
                 split_seed: int = 0, encoder_params: LifParams | None = None) -> dict:
    """Train on 80% of the samples and report agreement with the oracle labels on the rest."""
    train_idx, test_idx = split_indices(len(setup.labels), split_seed)
    if model is None:
        model = train_classifier(setup, train_idx)
    x_test = model.normalize(setup.data.grids[test_idx])
    truth = setup.labels[test_idx]
    ann_pred = predict(model.ann, x_test)
    report = {"mode": mode, "n_test": int(len(test_idx)), "classes": len(setup.pool),
              "full_pool": setup.full_pool_size, "macs_per_sample": count_macs(model.ann)}
    if mode == "ann":
        pred = ann_pred
    elif mode == "snn":
        calib = model.normalize(setup.data.grids[train_idx])
        snet = convert_to_snn(model.ann, steps, calib)
        rasters = lif_encode_maps(x_test, steps, encoder_params)
        pred, trace = snn_classify(snet, rasters, steps)
        report["ann_agreement"] = float(np.mean(pred == ann_pred))
        report["steps"] = steps
        report["events"] = {"spikes": trace.spike_count, "syn_events": trace.syn_events,
                            "neuron_updates": trace.neuron_updates, "steps": trace.steps,
                            "samples": int(len(test_idx))}
    else:
        raise DomainError(f"unknown mode {mode!r}")
    report["agreement"] = float(np.mean(pred == truth))
    return report


def write_dataset(prefix, setup: RrmSetup) -> None:
    """CSV rows ``tau,i,j,r`` plus a JSON scenario header."""
    data = setup.data
    with open(f"{prefix}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "i", "j", "r"])
        s_idx, i_idx, j_idx = np.nonzero(np.ones_like(data.grids, dtype=bool))
        for s, i, j in zip(s_idx, i_idx, j_idx):
            w.writerow([int(data.tau[s]), int(i), int(j), repr(float(data.grids[s, i, j]))])
    header = {
        "scenario": setup.scenario.to_dict(),
        "generator": data.params,
        "mask": data.mask.astype(int).tolist(),
        "beams": setup.model.to_dict(),
        "pool": setup.pool.to_dict(),
    }
    with open(f"{prefix}.json", "w") as fh:
        json.dump(header, fh, sort_keys=True)


def read_dataset_csv(path, shape) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    steps = max(int(r["tau"]) for r in rows) + 1
    grids = np.zeros((steps, *shape))
    for r in rows:
        grids[int(r["tau"]), int(r["i"]), int(r["j"])] = float(r["r"])
    return grids
