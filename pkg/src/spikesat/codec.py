"""Spike encoders and decoders.

Rasters are ``uint8`` arrays of shape ``(channels, steps)`` holding 0/1.
Real-valued features are min-max normalized to [0, 1] and flattened row-major
before encoding.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FormatError, RangeError, ShapeError
from .snn import LifParams, _lif_update

MAGIC = b"SPKR"
DEFAULT_STEPS = 64


def check_raster(raster) -> np.ndarray:
    r = np.asarray(raster)
    if r.ndim != 2:
        raise ShapeError(f"raster must be 2-D, got shape {r.shape}")
    if r.shape[0] < 1 or r.shape[1] < 1:
        raise ShapeError("raster needs at least one channel and one step")
    if not np.all((r == 0) | (r == 1)):
        raise FormatError("raster entries must be 0 or 1")
    return r.astype(np.uint8)


@dataclass
class FeatureMatrix:
    """Real feature matrix with the min-max bounds used to normalize it."""

    data: np.ndarray
    lo: float
    hi: float

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if not np.all(np.isfinite(self.data)):
            raise DomainError("features must be finite")
        if not self.hi > self.lo:
            raise DomainError(f"normalization bounds need hi > lo, got ({self.lo}, {self.hi})")

    @classmethod
    def fit(cls, data) -> "FeatureMatrix":
        data = np.asarray(data, dtype=float)
        lo, hi = float(np.min(data)), float(np.max(data))
        if hi == lo:
            hi = lo + 1.0
        return cls(data, lo, hi)

    def normalized(self) -> np.ndarray:
        return np.clip((self.data - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def denormalize(self, values) -> np.ndarray:
        return np.asarray(values) * (self.hi - self.lo) + self.lo


def flatten(features) -> np.ndarray:
    """Row-major flatten ``[x11, x12, ..., xnm]``."""
    data = features.data if isinstance(features, FeatureMatrix) else np.asarray(features)
    return np.asarray(data).reshape(-1)


def unflatten(vector, shape) -> np.ndarray:
    return np.asarray(vector).reshape(shape)


def _check_unit(values) -> np.ndarray:
    v = np.atleast_1d(np.asarray(values, dtype=float))
    if v.ndim != 1:
        v = v.reshape(-1)
    if not np.all(np.isfinite(v)) or np.any(v < 0) or np.any(v > 1):
        raise RangeError("values must lie in [0, 1]")
    return v


def rate_quota(values, steps: int) -> np.ndarray:
    """Spike count per channel for deterministic rate coding (round half up)."""
    v = _check_unit(values)
    return np.floor(v * steps + 0.5).astype(np.int64)


def encode_rate(values, steps: int = DEFAULT_STEPS, mode: str = "deterministic", seed=None) -> np.ndarray:
    """Rate-code values in [0, 1] into a ``(len(values), steps)`` raster.

    Deterministic mode emits ``round(v*T)`` spikes per channel spread evenly
    by a quota schedule: with ``n`` spikes due, step ``t`` fires iff
    ``floor((t+1)n/T) > floor(tn/T)``. Stochastic mode draws an independent
    Bernoulli(v) per step from one seeded stream per channel.
    """
    if steps < 1:
        raise DomainError("steps must be >= 1")
    v = _check_unit(values)
    if mode == "deterministic":
        n = rate_quota(v, steps)[:, None]
        t = np.arange(steps, dtype=np.int64)[None, :]
        return (((t + 1) * n) // steps > (t * n) // steps).astype(np.uint8)
    if mode == "stochastic":
        if seed is None:
            raise DomainError("stochastic rate coding needs an explicit seed")
        streams = np.random.SeedSequence(seed).spawn(len(v))
        out = np.empty((len(v), steps), dtype=np.uint8)
        for i, (p, ss) in enumerate(zip(v, streams)):
            out[i] = np.random.default_rng(ss).random(steps) < p
        return out
    raise DomainError(f"unknown rate mode {mode!r}")


def encode_ttfs(values, steps: int = DEFAULT_STEPS) -> np.ndarray:
    """Time-to-first-spike coding: one spike at ``round((1-v)(T-1))``, none for v == 0."""
    if steps < 2:
        raise DomainError("TTFS coding needs at least 2 steps")
    v = _check_unit(values)
    out = np.zeros((len(v), steps), dtype=np.uint8)
    t = np.floor((1.0 - v) * (steps - 1) + 0.5).astype(np.int64)
    idx = np.nonzero(v > 0)[0]
    out[idx, t[idx]] = 1
    return out


def encode_lif_stream(series, params: LifParams | None = None) -> np.ndarray:
    """Drive one LIF neuron per channel with its time series.

    ``series`` is ``(channels, steps)``; each column is one step's input
    current. Returns the raster of the encoding neurons.
    """
    params = params or LifParams()
    s = np.atleast_2d(np.asarray(series, dtype=float))
    if not np.all(np.isfinite(s)):
        raise DomainError("non-finite sample in series")
    n, steps = s.shape
    v = np.full(n, params.v_init * params.threshold)
    refrac = np.zeros(n, dtype=np.int64)
    out = np.zeros((n, steps), dtype=np.uint8)
    for t in range(steps):
        v, spike, refrac = _lif_update(v, s[:, t], params, refrac)
        out[:, t] = spike
    return out


def decode_rate(raster) -> np.ndarray:
    r = check_raster(raster)
    return r.sum(axis=1) / r.shape[1]


def decode_ttfs(raster) -> np.ndarray:
    r = check_raster(raster)
    steps = r.shape[1]
    if steps < 2:
        raise FormatError("TTFS decoding needs at least 2 steps")
    counts = r.sum(axis=1)
    if np.any(counts > 1):
        raise FormatError("TTFS raster has more than one spike in a channel")
    first = np.argmax(r, axis=1)
    return np.where(counts == 1, 1.0 - first / (steps - 1), 0.0)


def write_rle_csv(path, raster) -> None:
    """One row per channel: channel index, then the steps at which it fired."""
    r = check_raster(raster)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["channels", r.shape[0], "steps", r.shape[1]])
        for i, row in enumerate(r):
            w.writerow([i, *np.nonzero(row)[0].tolist()])


def read_rle_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "channels":
        raise FormatError("missing RLE header")
    n, steps = int(rows[0][1]), int(rows[0][3])
    out = np.zeros((n, steps), dtype=np.uint8)
    for row in rows[1:]:
        ch = int(row[0])
        out[ch, [int(t) for t in row[1:]]] = 1
    return out


def to_bytes(raster) -> bytes:
    r = check_raster(raster)
    n, steps = r.shape
    return MAGIC + struct.pack("<II", n, steps) + np.packbits(r.reshape(-1), bitorder="big").tobytes()


def from_bytes(blob: bytes) -> np.ndarray:
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise FormatError("not a SPKR raster")
    n, steps = struct.unpack("<II", blob[4:12])
    payload = np.frombuffer(blob[12:], dtype=np.uint8)
    nbytes = -(-n * steps // 8)
    if payload.size != nbytes:
        raise FormatError(f"expected {nbytes} payload bytes, found {payload.size}")
    bits = np.unpackbits(payload, bitorder="big")[: n * steps]
    return bits.reshape(n, steps)


def write_binary(path, raster) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(raster))


def read_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
