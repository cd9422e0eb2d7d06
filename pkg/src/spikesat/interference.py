"""Interference detection and classification.

Signals are complex baseband blocks of ``N`` samples whose monitored band is
the positive half of the spectrum (FFT bins ``0 .. N/2-1``), split into ``L``
equal subbands. The desired signal and the receiver noise are confined to
that band, which makes the samples analytic: their real part alone carries
the full spectrum, so a resonator bank driven by ``Re(x)`` sees the same
subband powers as an FFT of ``x``.

Class 0 means no interference; class ``i`` means interference in subband ``i``.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ann import DenseNet, TrainConfig, convert_to_snn, count_macs, predict, snn_classify, train_sgd
from .codec import encode_rate, encode_ttfs
from .errors import DomainError, ShapeError
from .snn import RfParams, SimTrace, rf_spike

KINDS = ("tone", "narrowband")


def is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft_radix2(x) -> np.ndarray:
    """Iterative decimation-in-time radix-2 FFT along the last axis."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    if not is_pow2(n):
        raise ShapeError(f"FFT length must be a power of two, got {n}")
    lead = x.shape[:-1]
    a = x[..., _bit_reverse(n)].reshape(-1, n)
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(a.shape[0], n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(-1, n)
        size *= 2
    return a.reshape(*lead, n)


def ifft_radix2(spec) -> np.ndarray:
    spec = np.asarray(spec, dtype=complex)
    return np.conj(fft_radix2(np.conj(spec))) / spec.shape[-1]


@dataclass
class SignalScenario:
    n: int = 256
    subbands: int = 4
    label: int = 0
    snr_db: float = 10.0
    isr_db: float = 5.0
    kind: str = "tone"
    seed: int | list = 0

    def __post_init__(self):
        if not is_pow2(self.n) or self.n < 4:
            raise DomainError(f"sample count must be a power of two >= 4, got {self.n}")
        if self.subbands < 1 or (self.n // 2) % self.subbands:
            raise DomainError(f"{self.subbands} subbands do not divide {self.n // 2} bins")
        if not 0 <= self.label <= self.subbands:
            raise DomainError(f"label {self.label} outside 0..{self.subbands}")
        if self.kind not in KINDS:
            raise DomainError(f"unknown interference kind {self.kind!r}")

    @property
    def bins_per_subband(self) -> int:
        return self.n // (2 * self.subbands)

    def band_bins(self) -> np.ndarray:
        return np.arange(1, self.n // 2)


def synth_signal(sc: SignalScenario) -> np.ndarray:
    """Unit-power QPSK multicarrier signal plus band-limited noise and interference.

    Random draws happen in a fixed order regardless of label, so a scenario
    with interference power zero reproduces the clean signal bit for bit.
    """
    rng = np.random.default_rng(sc.seed)
    n = sc.n
    band = sc.band_bins()
    nb = band.size
    spec = np.zeros(n, dtype=complex)
    qpsk = (rng.integers(0, 2, nb) * 2 - 1 + 1j * (rng.integers(0, 2, nb) * 2 - 1)) / np.sqrt(2)
    spec[band] = qpsk * n / np.sqrt(nb)
    noise = (rng.normal(size=nb) + 1j * rng.normal(size=nb)) / np.sqrt(2)
    noise_power = 10.0 ** (-sc.snr_db / 10.0)
    spec[band] += noise * n * np.sqrt(noise_power / nb)

    width = sc.bins_per_subband
    offset = int(rng.integers(0, width))
    phase = np.exp(2j * np.pi * rng.random())
    nb_width = max(1, width // 2)
    nb_start = int(rng.integers(0, width - nb_width + 1))
    nb_vals = (rng.normal(size=nb_width) + 1j * rng.normal(size=nb_width)) / np.sqrt(2)
    if sc.label > 0:
        p_int = 10.0 ** (sc.isr_db / 10.0)
        lo = (sc.label - 1) * width
        if sc.kind == "tone":
            k = max(lo + offset, 1)
            spec[k] += phase * n * np.sqrt(p_int)
        else:
            ks = np.maximum(lo + nb_start + np.arange(nb_width), 1)
            spec[ks] += nb_vals * n * np.sqrt(p_int / nb_width)
    return ifft_radix2(spec)


@dataclass
class SubbandFeatures:
    shares: np.ndarray
    source: str = "classical-fft"
    bin_power: np.ndarray | None = field(default=None, repr=False)
    trace: SimTrace | None = field(default=None, repr=False)


def subband_shares(bin_power, subbands: int) -> np.ndarray:
    """Mean power per subband over the positive-half bins, normalized to sum 1."""
    p = np.asarray(bin_power, dtype=float)
    half = p.shape[-1]
    if half % subbands:
        raise DomainError(f"{subbands} subbands do not divide {half} bins")
    means = p.reshape(*p.shape[:-1], subbands, half // subbands).mean(axis=-1)
    total = means.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, means / np.where(total > 0, total, 1.0), 0.0)


def fft_features(samples, subbands: int = 4) -> SubbandFeatures:
    """Subband power shares from a radix-2 FFT. All-zero input gives all-zero shares."""
    x = np.asarray(samples)
    spec = fft_radix2(x)
    n = x.shape[-1]
    power = np.abs(spec[..., : n // 2]) ** 2
    return SubbandFeatures(subband_shares(power, subbands), "classical-fft", power)


def rf_stft_features(samples, subbands: int = 4, params: RfParams | None = None,
                     window: int | None = None) -> SubbandFeatures:
    """Subband shares from a bank of resonate-and-fire neurons.

    One resonator per probed bin ``k`` (``omega_k = 2 pi k / window``) is driven
    by the real part of the samples; the squared magnitude of its state at the
    end of each window is the bin power (averaged over windows). ``params``
    supplies damping, threshold and phase tolerance; its ``omega`` is ignored.
    Spikes follow the resonate-and-fire rule and are only counted.
    """
    x = np.atleast_2d(np.asarray(samples))
    single = np.asarray(samples).ndim == 1
    n = x.shape[-1]
    window = window or n
    if not is_pow2(n) or not is_pow2(window) or window > n:
        raise ShapeError("sample and window lengths must be powers of two, window <= length")
    params = params or RfParams(omega=0.0)
    n_res = window // 2
    omega = 2 * np.pi * np.arange(n_res) / window
    rot = params.damping * np.exp(1j * omega)
    drive = x.real
    batch = x.shape[0]
    n_win = n // window
    power = np.zeros((batch, n_res))
    raster = np.zeros((batch, n_res, n), dtype=np.uint8)
    for w in range(n_win):
        z = np.zeros((batch, n_res), dtype=complex)
        for t in range(window):
            step = w * window + t
            z = rot * z + drive[:, step:step + 1]
            raster[:, :, step] = rf_spike(z, params.threshold, params.phase_tol)
        power += np.abs(z) ** 2
    power /= n_win
    spikes = int(raster.sum())
    trace = SimTrace(
        rasters=[raster[0] if single else raster],
        spike_count=spikes,
        syn_events=spikes,
        neuron_updates=batch * n_res * n,
        steps=n,
    )
    shares = subband_shares(power, subbands)
    if single:
        shares, power = shares[0], power[0]
    return SubbandFeatures(shares, "rf-spiking", power, trace)


def energy_detector_oracle(features, eta: float = 2.0) -> int | np.ndarray:
    """Label the strongest subband when its share reaches ``eta/L``, else 0."""
    f = features.shares if isinstance(features, SubbandFeatures) else np.asarray(features)
    f2 = np.atleast_2d(f)
    n_sub = f2.shape[-1]
    top = np.argmax(f2, axis=-1)
    pmax = f2[np.arange(f2.shape[0]), top]
    labels = np.where(pmax >= eta / n_sub, top + 1, 0)
    return int(labels[0]) if np.ndim(f) == 1 else labels


@dataclass
class DatasetSpec:
    per_class: int = 500
    n: int = 256
    subbands: int = 4
    snr_db: float = 10.0
    isr_db: float = 5.0
    kind: str = "mixed"
    seed: int = 7

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class IdDataset:
    spec: DatasetSpec
    labels: np.ndarray
    kinds: list
    features: np.ndarray
    samples: np.ndarray | None = None


def _scenario(spec: DatasetSpec, index: int, label: int) -> SignalScenario:
    rng = np.random.default_rng([spec.seed, index, 1])
    kind = spec.kind if spec.kind != "mixed" else KINDS[int(rng.integers(0, 2))]
    return SignalScenario(n=spec.n, subbands=spec.subbands, label=label, snr_db=spec.snr_db,
                          isr_db=spec.isr_db, kind=kind, seed=[spec.seed, index])


def make_dataset(spec: DatasetSpec, source: str = "classical-fft", threads: int = 1,
                 keep_samples: bool = False) -> IdDataset:
    """Per-class balanced dataset; sample ``i`` is seeded from ``(seed, i)``."""
    labels = np.repeat(np.arange(spec.subbands + 1), spec.per_class)
    scen = [_scenario(spec, i, int(lab)) for i, lab in enumerate(labels)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            samples = np.array(list(pool.map(synth_signal, scen)))
    else:
        samples = np.array([synth_signal(s) for s in scen])
    if source == "classical-fft":
        feats = fft_features(samples, spec.subbands).shares
    elif source == "rf-spiking":
        feats = rf_stft_features(samples, spec.subbands).shares
    else:
        raise DomainError(f"unknown feature source {source!r}")
    return IdDataset(spec, labels, [s.kind for s in scen], feats, samples if keep_samples else None)


def split_indices(n: int, seed, train_fraction: float = 0.8):
    order = np.random.default_rng(seed).permutation(n)
    cut = int(round(train_fraction * n))
    return np.sort(order[:cut]), np.sort(order[cut:])


def confusion_matrix(truth, pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(truth), np.asarray(pred)), 1)
    return cm


def write_confusion_csv(path, cm) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true\\pred"] + list(range(cm.shape[1])))
        for i, row in enumerate(cm):
            w.writerow([i] + row.tolist())


DEFAULT_TRAIN = TrainConfig(lr=0.1, epochs=60, batch_size=32, seed=0, momentum=0.9)


@dataclass
class IdModel:
    ann: DenseNet
    lo: float
    hi: float
    curve: list

    def normalize(self, feats):
        return np.clip((np.asarray(feats) - self.lo) / (self.hi - self.lo), 0.0, 1.0)


def train_classifier(ds: IdDataset, train_idx, hidden: int = 32, cfg: TrainConfig = DEFAULT_TRAIN) -> IdModel:
    x = ds.features[train_idx]
    lo, hi = float(x.min()), float(x.max())
    model = IdModel(None, lo, hi, [])
    net = DenseNet.init([ds.spec.subbands, hidden, ds.spec.subbands + 1], seed=cfg.seed)
    model.ann, model.curve = train_sgd(net, model.normalize(x), ds.labels[train_idx], cfg)
    return model


def encode_features(values, encoder: str, steps: int) -> np.ndarray:
    if encoder == "rate":
        return np.array([encode_rate(v, steps) for v in values])
    if encoder == "ttfs":
        return np.array([encode_ttfs(v, steps) for v in values])
    raise DomainError(f"unknown encoder {encoder!r}")


def run_pipeline(ds: IdDataset, mode: str = "ann", steps: int = 64, model: IdModel | None = None,
                 split_seed: int = 0) -> dict:
    """Train (unless a model is given) and evaluate on the held-out 20%.

    ``mode`` is ``ann``, ``snn-rate`` or ``snn-ttfs``. SNN modes convert the
    trained ANN and feed it rate- or TTFS-coded features; TTFS inputs reach
    the first layer through latching synapses.
    """
    train_idx, test_idx = split_indices(len(ds.labels), split_seed)
    if model is None:
        model = train_classifier(ds, train_idx)
    n_classes = ds.spec.subbands + 1
    x_test = model.normalize(ds.features[test_idx])
    truth = ds.labels[test_idx]
    ann_pred = predict(model.ann, x_test)
    report = {"mode": mode, "n_test": int(len(test_idx)), "macs_per_sample": count_macs(model.ann)}
    oracle = energy_detector_oracle(ds.features[test_idx])
    report["oracle_accuracy"] = float(np.mean(oracle == truth))
    if mode == "ann":
        pred = ann_pred
        trace = None
    elif mode in ("snn-rate", "snn-ttfs"):
        encoder = mode.split("-")[1]
        calib = model.normalize(ds.features[train_idx])
        snet = convert_to_snn(model.ann, steps, calib)
        rasters = encode_features(x_test, encoder, steps)
        kernel = "latch" if encoder == "ttfs" else "spike"
        pred, trace = snn_classify(snet, rasters, steps, input_kernel=kernel)
        report["ann_agreement"] = float(np.mean(pred == ann_pred))
        report["steps"] = steps
    else:
        raise DomainError(f"unknown mode {mode!r}")
    cm = confusion_matrix(truth, pred, n_classes)
    report["accuracy"] = float(np.mean(pred == truth))
    report["per_class_accuracy"] = [float(cm[i, i] / max(cm[i].sum(), 1)) for i in range(n_classes)]
    report["confusion"] = cm.tolist()
    if trace is not None:
        count = len(test_idx)
        report["events"] = {
            "spikes": trace.spike_count,
            "syn_events": trace.syn_events,
            "neuron_updates": trace.neuron_updates,
            "steps": trace.steps,
            "samples": count,
        }
    return report


def write_dataset(prefix, ds: IdDataset) -> None:
    """Interleaved float64 I/Q samples (``prefix.iq``) plus a JSON manifest."""
    if ds.samples is None:
        raise DomainError("dataset was built without keeping samples")
    iq = np.empty(ds.samples.shape + (2,), dtype="<f8")
    iq[..., 0] = ds.samples.real
    iq[..., 1] = ds.samples.imag
    with open(f"{prefix}.iq", "wb") as fh:
        fh.write(iq.tobytes())
    manifest = {
        "N": ds.spec.n, "L": ds.spec.subbands, "snr_db": ds.spec.snr_db, "isr_db": ds.spec.isr_db,
        "master_seed": ds.spec.seed, "labels": ds.labels.tolist(), "kinds": ds.kinds,
        "seeds": [[ds.spec.seed, i] for i in range(len(ds.labels))],
    }
    with open(f"{prefix}.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True)


def read_dataset(prefix) -> tuple[np.ndarray, dict]:
    with open(f"{prefix}.json") as fh:
        manifest = json.load(fh)
    raw = np.fromfile(f"{prefix}.iq", dtype="<f8").reshape(len(manifest["labels"]), manifest["N"], 2)
    return raw[..., 0] + 1j * raw[..., 1], manifest
