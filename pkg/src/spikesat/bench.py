"""Energy and delay proxies for dense versus spiking execution, and EDP reports."""
from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError, DomainError, InputError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CSV_HEADER = ["workload", "B", "energy_conv", "energy_neuro", "delay_conv", "delay_neuro",
              "energy_ratio", "delay_ratio", "edp_ratio"]


@dataclass(frozen=True)
class EnergyModel:
    """Illustrative per-operation costs; none of the defaults are hardware measurements.

    The ``overhead_*`` terms are fixed costs paid once per batch (zero by
    default, which makes every ratio independent of the batch size).
    """

    e_mac: float = 4.6e-12
    e_spike: float = 1e-12
    e_syn: float = 1e-13
    e_update: float = 5e-14
    p_idle_conv: float = 0.0
    p_idle_neuro: float = 0.0
    t_step: float = 1e-6
    conv_throughput: float = 1e9
    overhead_delay_conv: float = 0.0
    overhead_delay_neuro: float = 0.0
    overhead_energy_conv: float = 0.0
    overhead_energy_neuro: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ConfigError(f"{f.name} must be a finite number >= 0")
        if self.t_step <= 0 or self.conv_throughput <= 0:
            raise ConfigError("t_step and conv_throughput must be > 0")

    @classmethod
    def from_dict(cls, doc) -> "EnergyModel":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown energy model keys: {sorted(extra)}")
        return cls(**{k: float(v) for k, v in doc.items()})

    @classmethod
    def from_file(cls, path) -> "EnergyModel":
        """Read a TOML or JSON file; a TOML ``[energy]`` table is used when present."""
        try:
            with open(path, "rb") as fh:
                raw = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read energy model: {exc}") from exc
        try:
            doc = json.loads(raw) if str(path).endswith(".json") else tomllib.loads(raw.decode())
        except (ValueError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"malformed energy model {path}: {exc}") from exc
        return cls.from_dict(doc.get("energy", doc))


@dataclass
class Workload:
    """Per-sample cost of one inference on each platform."""

    name: str
    macs_per_sample: float
    spikes: float = 0.0
    syn_events: float = 0.0
    neuron_updates: float = 0.0
    steps: float = 0.0
    metrics: dict = field(default_factory=dict)

    @classmethod
    def from_events(cls, name, macs_per_sample, events: dict, metrics=None) -> "Workload":
        """Build from batch event totals with a ``samples`` count."""
        try:
            n = float(events["samples"])
            per = {k: float(events[k]) / n for k in ("spikes", "syn_events", "neuron_updates")}
            steps = float(events["steps"])
        except (KeyError, TypeError, ZeroDivisionError) as exc:
            raise InputError(f"event counts for {name!r} are incomplete: {exc}") from exc
        return cls(name, float(macs_per_sample), steps=steps, metrics=dict(metrics or {}), **per)


@dataclass
class BenchRecord:
    workload: str
    B: int
    energy_conv: float
    energy_neuro: float
    delay_conv: float
    delay_neuro: float
    metrics: dict = field(default_factory=dict)

    @property
    def ratios(self):
        return edp_gain(self)

    def row(self) -> dict:
        e, d, p = self.ratios
        out = {k: getattr(self, k) for k in CSV_HEADER[:6]}
        out.update(energy_ratio=e, delay_ratio=d, edp_ratio=p)
        return out


def estimate_conv(macs_per_sample: float, batch: int, model: EnergyModel):
    """``(energy, delay)`` of a dense accelerator processing a batch."""
    if macs_per_sample < 0 or batch < 1:
        raise DomainError("need macs >= 0 and batch >= 1")
    if macs_per_sample == 0:
        return 0.0, 0.0
    delay = batch * macs_per_sample / model.conv_throughput + model.overhead_delay_conv
    energy = batch * macs_per_sample * model.e_mac + model.p_idle_conv * delay + model.overhead_energy_conv
    return energy, delay


def estimate_neuro(totals, batch: int, model: EnergyModel):
    """``(energy, delay)`` from per-sample ``(spikes, syn_events, neuron_updates, steps)``."""
    spikes, syn, updates, steps = (float(x) for x in totals)
    if min(spikes, syn, updates, steps) < 0 or batch < 1:
        raise DomainError("event totals must be >= 0 and batch >= 1")
    delay = batch * steps * model.t_step + model.overhead_delay_neuro
    dynamic = spikes * model.e_spike + syn * model.e_syn + updates * model.e_update
    energy = batch * dynamic + model.p_idle_neuro * delay + model.overhead_energy_neuro
    return energy, delay


def edp_gain(record: BenchRecord):
    """``(energy_ratio, delay_ratio, edp_ratio)``, conventional over neuromorphic.

    ``edp_ratio > 1`` places the point on the side of the EDP line that
    favors the spiking platform.
    """
    if record.energy_neuro == 0 or record.delay_neuro == 0:
        raise DomainError("neuromorphic energy and delay must be nonzero")
    e = record.energy_conv / record.energy_neuro
    d = record.delay_conv / record.delay_neuro
    return e, d, e * d


def sweep_batches(workload: Workload, batches, model: EnergyModel):
    """One record per batch size plus scatter rows ``(delay_ratio, energy_ratio, B, workload)``."""
    records, scatter = [], []
    for b in batches:
        b = int(b)
        ec, dc = estimate_conv(workload.macs_per_sample, b, model)
        en, dn = estimate_neuro((workload.spikes, workload.syn_events, workload.neuron_updates,
                                 workload.steps), b, model)
        rec = BenchRecord(workload.name, b, ec, en, dc, dn, dict(workload.metrics))
        e, d, _ = edp_gain(rec)
        records.append(rec)
        scatter.append((d, e, b, workload.name))
    return records, scatter


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            row = r.row()
            w.writerow([_fmt(row[k]) for k in CSV_HEADER])


def read_csv(path) -> list[BenchRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise InputError(f"unexpected bench CSV header in {path}")
        out = []
        for row in reader:
            doc = dict(zip(CSV_HEADER, row))
            out.append(BenchRecord(doc["workload"], int(doc["B"]),
                                   *(float(doc[k]) for k in CSV_HEADER[2:6])))
        return out


def write_json(path, records) -> None:
    doc = [dict(asdict(r), **dict(zip(CSV_HEADER[6:], r.ratios))) for r in records]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_json(path) -> list[BenchRecord]:
    with open(path) as fh:
        doc = json.load(fh)
    return [BenchRecord(d["workload"], int(d["B"]), d["energy_conv"], d["energy_neuro"],
                        d["delay_conv"], d["delay_neuro"], d.get("metrics", {})) for d in doc]


PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def write_svg(path, records, width: int = 480, height: int = 400) -> None:
    """Log-log scatter of energy ratio against delay ratio with the EDP line ``E*D = 1``.

    The reference line is the only ``<path>`` element; each record is one
    ``<circle>``.
    """
    pts = np.array([r.ratios[1::-1] for r in records], dtype=float)  # (delay, energy)
    if pts.size == 0:
        raise DomainError("no records to plot")
    logs = np.log10(pts)
    lo = math.floor(min(logs.min(), -1.0))
    hi = math.ceil(max(logs.max(), 1.0))
    pad = 50

    def px(lx, ly):
        x = pad + (lx - lo) / (hi - lo) * (width - 2 * pad)
        y = height - pad - (ly - lo) / (hi - lo) * (height - 2 * pad)
        return f"{x:.3f}", f"{y:.3f}"

    names = sorted({r.workload for r in records})
    color = {n: PALETTE[i % len(PALETTE)] for i, n in enumerate(names)}
    x0, y0 = px(lo, -lo)
    x1, y1 = px(hi, -hi)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    bx0, by0 = px(lo, lo)
    bx1, by1 = px(hi, hi)
    out.append(f'<rect x="{bx0}" y="{by1}" width="{float(bx1) - float(bx0):.3f}" '
               f'height="{float(by0) - float(by1):.3f}" fill="none" stroke="black"/>')
    for dec in range(lo, hi + 1):
        tx, ty = px(dec, lo)
        out.append(f'<text x="{tx}" y="{float(ty) + 16:.3f}" font-size="10" text-anchor="middle">1e{dec}</text>')
        tx, ty = px(lo, dec)
        out.append(f'<text x="{float(tx) - 6:.3f}" y="{ty}" font-size="10" text-anchor="end">1e{dec}</text>')
    out.append(f'<text x="{width / 2:.1f}" y="{height - 10}" font-size="12" text-anchor="middle">delay ratio</text>')
    out.append(f'<text x="14" y="{height / 2:.1f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 14 {height / 2:.1f})">energy ratio</text>')
    out.append(f'<path class="edp-line" d="M {x0} {y0} L {x1} {y1}" stroke="gray" '
               f'stroke-dasharray="4 3" fill="none"/>')
    for r, (lx, ly) in zip(records, logs):
        cx, cy = px(lx, ly)
        out.append(f'<circle class="marker" cx="{cx}" cy="{cy}" r="4" fill="{color[r.workload]}">'
                   f'<title>{r.workload} B={r.B}</title></circle>')
    for i, n in enumerate(names):
        out.append(f'<text x="{pad + 6}" y="{pad + 14 * (i + 1)}" font-size="10" fill="{color[n]}">{n}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def emit_report(records, path, fmt: str = "csv") -> None:
    """Write ``records`` as ``csv``, ``json`` or ``svg`` (the EDP scatter)."""
    if not records:
        raise DomainError("no records to report")
    writers = {"csv": write_csv, "json": write_json, "svg": write_svg, "svg-scatter": write_svg}
    if fmt not in writers:
        raise ConfigError(f"unknown report format {fmt!r}")
    writers[fmt](path, records)
