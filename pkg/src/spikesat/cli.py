"""Command-line entry point: ``spikesat {rrm,id,beam,bench,encode}``.

Scenario files are TOML (or JSON) with optional ``seed``, ``[rrm]``, ``[id]``,
``[beam]``, ``[bench]`` and ``[energy]`` tables. Failures are reported on
stderr as one JSON object ``{"error": CODE, "message": ...}``; the exit code
is 0 on success, 1 for configuration or domain errors and 2 for I/O errors.
"""
from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench, beamform, codec, interference, rrm
from .errors import ConfigError, InputError, SpikesatError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SECTIONS = {"seed", "rrm", "id", "beam", "bench", "energy"}
IO_CODES = {"E_IO", "E_INPUT"}


class IOFailure(SpikesatError):
    code = "E_IO"


def load_scenario(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"scenario file not found: {path}")
    raw = p.read_bytes()
    try:
        doc = json.loads(raw) if p.suffix == ".json" else tomllib.loads(raw.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"malformed scenario {path}: {exc}") from exc
    unknown = set(doc) - SECTIONS
    if unknown:
        raise ConfigError(f"unknown scenario sections: {sorted(unknown)}")
    return doc


def csv_list(text, cast=str) -> list:
    try:
        return [cast(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad list value {text!r}") from exc


def master_seed(args, scen) -> int:
    seed = args.seed if args.seed is not None else scen.get("seed")
    if seed is None:
        raise ConfigError("a seed is required (--seed or 'seed' in the scenario)")
    return int(seed)


def out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def dump_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def energy_model(scen) -> bench.EnergyModel:
    return bench.EnergyModel.from_dict(scen.get("energy", {}))


def batches_of(args, scen) -> list[int]:
    if args.batches is not None:
        b = csv_list(args.batches, int)
    else:
        b = [int(x) for x in scen.get("bench", {}).get("batches", [1, 10, 100])]
    if not b or min(b) < 1:
        raise ConfigError("batch sizes must be >= 1")
    return b


def bench_csv_for(path, workloads, args, scen) -> None:
    model = energy_model(scen)
    records = []
    for wl in workloads:
        records += bench.sweep_batches(wl, batches_of(args, scen), model)[0]
    if records:
        bench.write_csv(path, records)


def cmd_rrm(args, scen) -> None:
    seed = master_seed(args, scen)
    sc = rrm.RrmScenario.from_dict(scen.get("rrm", {}))
    modes = csv_list(args.mode or "ann,snn")
    for m in modes:
        if m not in ("ann", "snn"):
            raise ConfigError(f"unknown rrm mode {m!r}")
    out = out_dir(args)
    setup = rrm.build_setup(sc, seed, threads=args.threads)
    train_idx, _ = rrm.split_indices(len(setup.labels), seed)
    cfg = replace(rrm.DEFAULT_TRAIN, seed=seed)
    model = rrm.train_classifier(setup, train_idx, cfg)
    report = {"seed": seed, "scenario": sc.to_dict(), "pool_size": len(setup.pool),
              "full_pool_size": setup.full_pool_size, "results": {}}
    workloads = []
    for m in modes:
        r = rrm.run_pipeline(setup, m, steps=args.steps, model=model, split_seed=seed)
        report["results"][m] = r
        if m == "snn":
            workloads.append(bench.Workload.from_events(f"rrm-snn-T{args.steps}", r["macs_per_sample"],
                                                        r["events"], {"agreement": r["agreement"]}))
    dump_json(out / "rrm_report.json", report)
    dump_events(out / "rrm_events.json", workloads)
    bench_csv_for(out / "rrm_bench.csv", workloads, args, scen)


def dump_events(path, workloads) -> None:
    dump_json(path, [{"workload": w.name, "macs_per_sample": w.macs_per_sample, "spikes": w.spikes,
                      "syn_events": w.syn_events, "neuron_updates": w.neuron_updates, "steps": w.steps,
                      "metrics": w.metrics} for w in workloads])


def cmd_id(args, scen) -> None:
    seed = master_seed(args, scen)
    doc = dict(scen.get("id", {}))
    fields = set(interference.DatasetSpec.__dataclass_fields__) - {"seed"}
    if set(doc) - fields:
        raise ConfigError(f"unknown id keys: {sorted(set(doc) - fields)}")
    spec = interference.DatasetSpec(**doc, seed=seed)
    modes = csv_list(args.mode or "ann,snn")
    encoders = csv_list(args.encoder or "rate,ttfs")
    runs = []
    for m in modes:
        if m == "ann":
            runs.append("ann")
        elif m == "snn":
            for e in encoders:
                if e not in ("rate", "ttfs"):
                    raise ConfigError(f"unknown encoder {e!r}")
                runs.append(f"snn-{e}")
        else:
            raise ConfigError(f"unknown id mode {m!r}")
    out = out_dir(args)
    ds = interference.make_dataset(spec, threads=args.threads)
    train_idx, _ = interference.split_indices(len(ds.labels), seed)
    cfg = replace(interference.DEFAULT_TRAIN, seed=seed)
    model = interference.train_classifier(ds, train_idx, cfg=cfg)
    report = {"seed": seed, "dataset": spec.to_dict(), "results": {}}
    workloads = []
    for run in runs:
        r = interference.run_pipeline(ds, run, steps=args.steps, model=model, split_seed=seed)
        interference.write_confusion_csv(out / f"id_confusion_{run}.csv", np.array(r["confusion"]))
        report["results"][run] = r
        if "events" in r:
            workloads.append(bench.Workload.from_events(f"id-{run}-T{args.steps}", r["macs_per_sample"],
                                                        r["events"], {"accuracy": r["accuracy"]}))
    dump_json(out / "id_report.json", report)
    dump_events(out / "id_events.json", workloads)
    bench_csv_for(out / "id_bench.csv", workloads, args, scen)


BEAM_KEYS = {"n", "spacing", "theta0", "interferers", "noise_power", "grid_points", "lam_fraction",
             "sweep", "slca_window", "slca_dt", "snapshots"}


def polar_svg(path, grid, traces: dict, floor_db: float = -40.0, size: int = 420) -> None:
    """Half-plane polar beampattern; one ``<path>`` per trace, rings as circles."""
    c = size / 2
    rad = c - 30
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">', f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>']
    for db in (0, -10, -20, -30):
        r = rad * (db - floor_db) / -floor_db
        out.append(f'<circle cx="{c:.3f}" cy="{c:.3f}" r="{r:.3f}" fill="none" stroke="#ccc"/>')
        out.append(f'<text x="{c + 2:.3f}" y="{c - r - 2:.3f}" font-size="9">{db} dB</text>')
    for i, (name, p_db) in enumerate(traces.items()):
        r = rad * (np.clip(p_db, floor_db, 0.0) - floor_db) / -floor_db
        th = np.deg2rad(grid)
        xs, ys = c + r * np.sin(th), c - r * np.cos(th)
        d = " ".join(f"{'M' if k == 0 else 'L'} {x:.3f} {y:.3f}" for k, (x, y) in enumerate(zip(xs, ys)))
        color = colors[i % len(colors)]
        out.append(f'<path class="trace" data-solver="{name}" d="{d}" fill="none" stroke="{color}"/>')
        out.append(f'<text x="10" y="{16 + 14 * i}" font-size="11" fill="{color}">{name}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def cmd_beam(args, scen) -> None:
    seed = master_seed(args, scen)
    doc = dict(scen.get("beam", {}))
    if set(doc) - BEAM_KEYS:
        raise ConfigError(f"unknown beam keys: {sorted(set(doc) - BEAM_KEYS)}")
    geom = beamform.ArrayGeometry(int(doc.get("n", 32)), float(doc.get("spacing", 0.5)))
    kw = {k: doc[k] for k in ("theta0", "noise_power") if k in doc}
    if "interferers" in doc:
        kw["interferers"] = [tuple(x) for x in doc["interferers"]]
    if "grid_points" in doc:
        kw["grid"] = np.linspace(-90.0, 90.0, int(doc["grid_points"]))
    frac = float(args.lam if args.lam is not None else doc.get("lam_fraction", 0.2))
    if frac < 0:
        raise ConfigError("--lambda must be >= 0 (a fraction of the smallest all-zero penalty)")
    solvers = csv_list(args.solver or "fista,slca")
    for s in solvers:
        if s not in ("fista", "slca"):
            raise ConfigError(f"unknown solver {s!r}")
    window = int(args.steps if args.steps is not None else doc.get("slca_window", 20000))
    out = out_dir(args)
    task = beamform.default_task(geom, frac, **kw)
    dense = beamform.solve_beam(beamform.BeamTask.from_dict({**task.to_dict(), "lam": 0.0}), geom)
    count = int(doc.get("snapshots", 2048))
    report = {"seed": seed, "lam_fraction": frac, "lam": task.lam, "n": geom.n, "warnings": [], "solvers": {}}
    patterns = {}
    for s in solvers:
        bw = beamform.solve_beam(task, geom, solver=s, slca_window=window,
                                 slca_dt=float(doc.get("slca_dt", 0.01)))
        off, off_frac = bw.off()
        entry = {"off_count": off, "off_fraction": off_frac, "degenerate": bw.degenerate}
        if bw.degenerate:
            report["warnings"].append(f"{s}: degenerate beamformer at lambda fraction {frac}")
        else:
            patterns[s] = beamform.beampattern(bw.w, geom, task.grid, db=True)
            entry["main_lobe_loss_db"] = beamform.main_lobe_loss_db(bw.w, dense.w, task, geom)
            y = beamform.snapshots(task, geom, count, seed) @ np.conj(bw.w)
            power = np.abs(y) ** 2
            q1, med, q3 = np.percentile(power, [25, 50, 75])
            entry["output_power"] = {"mean": float(power.mean()), "q1": float(q1), "median": float(med),
                                     "q3": float(q3), "snapshots": count}
            entry["weights"] = {"re": bw.w.real.tolist(), "im": bw.w.imag.tolist()}
        if bw.trace is not None:
            entry["events"] = {"spikes": bw.trace.spike_count, "syn_events": bw.trace.syn_events,
                               "neuron_updates": bw.trace.neuron_updates, "steps": bw.trace.steps}
        report["solvers"][s] = entry
    with open(out / "beam_pattern.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        names = list(patterns)
        w.writerow(["theta_deg"] + [f"{n}_db" for n in names])
        for i, th in enumerate(task.grid):
            w.writerow([repr(float(th))] + [repr(float(patterns[n][i])) for n in names])
    if patterns:
        polar_svg(out / "beam_pattern.svg", task.grid, patterns)
    fractions = [float(x) for x in doc.get("sweep", [0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.6, 0.8, 1.0])]
    rows = beamform.sweep_lambda(task, geom, fractions)
    with open(out / "beam_sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lam_fraction", "lam", "off_count", "off_fraction", "main_lobe_loss_db", "degenerate"])
        for r in rows:
            w.writerow([repr(r["lam_fraction"]), repr(r["lam"]), r["off_count"], repr(r["off_fraction"]),
                        repr(r["main_lobe_loss_db"]), int(r["degenerate"])])
    dump_json(out / "beam_report.json", report)
    for msg in report["warnings"]:
        logging.getLogger("spikesat").warning(msg)


def load_workloads(paths) -> list[bench.Workload]:
    out = []
    for p in paths:
        try:
            with open(p) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read event counts {p}: {exc}") from exc
        except ValueError as exc:
            raise InputError(f"malformed event counts {p}: {exc}") from exc
        for d in doc:
            try:
                out.append(bench.Workload(d["workload"], float(d["macs_per_sample"]), float(d["spikes"]),
                                          float(d["syn_events"]), float(d["neuron_updates"]),
                                          float(d["steps"]), d.get("metrics", {})))
            except (KeyError, TypeError) as exc:
                raise InputError(f"incomplete event counts in {p}: {exc}") from exc
    return out


def cmd_bench(args, scen) -> None:
    paths = list(args.inputs) or list(scen.get("bench", {}).get("events", []))
    if not paths:
        paths = sorted(glob.glob(os.path.join(args.out, "*_events.json")))
    if not paths:
        raise InputError("no event-count input given and none found in the output directory")
    workloads = load_workloads(paths)
    if not workloads:
        raise InputError("event-count inputs contain no spiking workloads")
    model = energy_model(scen)
    batches = batches_of(args, scen)
    records = []
    for wl in workloads:
        records += bench.sweep_batches(wl, batches, model)[0]
    out = out_dir(args)
    formats = csv_list(args.format or "csv,json,svg")
    suffix = {"csv": "csv", "json": "json", "svg": "svg"}
    for f in formats:
        if f not in suffix:
            raise ConfigError(f"unknown bench format {f!r}")
        bench.emit_report(records, out / f"bench.{suffix[f]}", f)


def read_values(path) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read values {path}: {exc}") from exc
    try:
        return np.array([float(x) for x in text.replace(",", " ").split()])
    except ValueError as exc:
        raise InputError(f"non-numeric value in {path}") from exc


def cmd_encode(args, scen) -> None:
    values = read_values(args.input)
    encoder = args.encoder or "rate"
    steps = args.steps
    fmt = args.format or "rle"
    if fmt not in ("rle", "bin"):
        raise ConfigError(f"unknown raster format {fmt!r}")
    if encoder == "rate":
        raster = codec.encode_rate(values, steps)
        decoded = codec.decode_rate(raster)
        bound = 1 / (2 * steps)
    elif encoder == "rate-stochastic":
        raster = codec.encode_rate(values, steps, "stochastic", master_seed(args, scen))
        decoded = codec.decode_rate(raster)
        bound = None
    elif encoder == "ttfs":
        raster = codec.encode_ttfs(values, steps)
        decoded = codec.decode_ttfs(raster)
        bound = 1 / (2 * (steps - 1))
    else:
        raise ConfigError(f"unknown encoder {encoder!r}")
    out = out_dir(args)
    target = out / ("raster.csv" if fmt == "rle" else "raster.spkr")
    (codec.write_rle_csv if fmt == "rle" else codec.write_binary)(target, raster)
    back = codec.read_rle_csv(target) if fmt == "rle" else codec.read_binary(target)
    if not np.array_equal(back, raster):
        raise IOFailure("raster did not survive the file round trip")
    dump_json(out / "encode_report.json", {
        "encoder": encoder, "steps": steps, "format": fmt, "values": values.tolist(),
        "decoded": decoded.tolist(), "max_error": float(np.max(np.abs(decoded - values), initial=0.0)),
        "error_bound": bound, "spikes": int(raster.sum()),
    })


COMMANDS = {"rrm": cmd_rrm, "id": cmd_id, "beam": cmd_beam, "bench": cmd_bench, "encode": cmd_encode}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikesat", description="Spiking vs dense SatCom workloads")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, steps=64):
        p.add_argument("--scenario", help="TOML or JSON scenario file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--steps", type=int, default=steps, help="spiking time steps")
        p.add_argument("--batches", help="comma-separated batch sizes, e.g. 1,10,100")
        p.add_argument("--format", help="output format(s)")
        return p

    p = common(sub.add_parser("rrm", help="payload resource classification"))
    p.add_argument("--mode", help="comma list of ann,snn")
    p = common(sub.add_parser("id", help="interference detection and classification"))
    p.add_argument("--mode", help="comma list of ann,snn")
    p.add_argument("--encoder", help="comma list of rate,ttfs")
    p = common(sub.add_parser("beam", help="sparse receive beamforming"), steps=None)
    p.add_argument("--solver", help="comma list of fista,slca")
    p.add_argument("--lambda", dest="lam", type=float, help="penalty as a fraction of its all-zero value")
    p = common(sub.add_parser("bench", help="energy/delay report from event counts"))
    p.add_argument("inputs", nargs="*", help="event-count JSON files (default: *_events.json in --out)")
    p = common(sub.add_parser("encode", help="codec round trip on a list of values"))
    p.add_argument("input", help="text file of values in [0, 1]")
    p.add_argument("--encoder", help="rate, rate-stochastic or ttfs")
    return parser


def fail(code: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": code, "message": message}, sort_keys=True) + "\n")
    return 2 if code in IO_CODES else 1


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        return fail("E_CONFIG", "--threads must be >= 1")
    if args.steps is not None and args.steps < 1:
        return fail("E_CONFIG", "--steps must be >= 1")
    try:
        scen = load_scenario(args.scenario)
        COMMANDS[args.command](args, scen)
    except SpikesatError as exc:
        return fail(exc.code, str(exc))
    except OSError as exc:
        return fail("E_IO", str(exc))
    except (TypeError, KeyError) as exc:
        return fail("E_CONFIG", f"invalid configuration: {exc}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
