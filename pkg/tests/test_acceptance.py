"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line with the measured values and
their limits, then asserts.
"""
import json
import time
import xml.etree.ElementTree as ET
from dataclasses import replace

import numpy as np
import pytest

from oracles import binomial_band, lasso_active_set, resonator_end_magnitude
from spikesat import beamform as bf
from spikesat import interference as itf
from spikesat import rrm
from spikesat.ann import DenseNet, grad_check
from spikesat.bench import (EnergyModel, Workload, read_csv, read_json, sweep_batches, write_csv, write_json,
                            write_svg)
from spikesat.cli import main
from spikesat.codec import decode_rate, decode_ttfs, encode_rate, encode_ttfs
from spikesat.lasso import LassoProblem, solve_fista, solve_lca, solve_slca

SVG = "{http://www.w3.org/2000/svg}"


def verdict(capsys, number, title, checks):
    """``checks`` is a list of ``(label, measured, limit, ok)``."""
    ok = all(c[3] for c in checks)
    detail = "; ".join(f"{label}={measured} (limit {limit})" for label, measured, limit, _ in checks)
    with capsys.disabled():
        print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
    assert ok, detail


def fmt(x):
    return f"{x:.3g}"


@pytest.fixture(scope="module")
def rrm_run():
    setup = rrm.build_setup(rrm.RrmScenario(), 42)
    train_idx, _ = rrm.split_indices(len(setup.labels), 42)
    model = rrm.train_classifier(setup, train_idx, replace(rrm.DEFAULT_TRAIN, seed=42))
    return setup, model


@pytest.fixture(scope="module")
def id_run():
    ds = itf.make_dataset(itf.DatasetSpec(per_class=500, n=256, subbands=4, snr_db=10.0, isr_db=5.0, seed=7))
    train_idx, _ = itf.split_indices(len(ds.labels), 0)
    return ds, itf.train_classifier(ds, train_idx)


def test_criterion_01_solver_oracle_equivalence(capsys):
    start = time.perf_counter()
    lca_gap, worst_kkt, all_converged = 0.0, 0.0, True
    for seed in range(50):
        rng = np.random.default_rng(seed)
        phi = rng.normal(size=(20, 40))
        phi /= np.linalg.norm(phi, axis=0)
        s = rng.normal(size=20)
        p = LassoProblem(phi, s, 0.1 * float(np.max(np.abs(phi.T @ s))))
        lca = solve_lca(p, tol=1e-8)
        ref = solve_fista(p)
        all_converged &= lca.converged and ref.converged
        lca_gap = max(lca_gap, float(np.max(np.abs(lca.a - ref.a))))
        worst_kkt = max(worst_kkt, lca.kkt, ref.kkt)
    brute_gap = 0.0
    for seed in range(10):
        rng = np.random.default_rng(1000 + seed)
        phi = rng.normal(size=(12, 8))
        s = rng.normal(size=12)
        p = LassoProblem(phi, s, 0.2 * float(np.max(np.abs((phi / np.linalg.norm(phi, axis=0)).T @ s))))
        brute_gap = max(brute_gap, float(np.max(np.abs(solve_fista(p, tol=1e-12).a
                                                       - lasso_active_set(p.phi, p.s, p.lam)))))
    elapsed = time.perf_counter() - start
    verdict(capsys, 1, "solver oracle equivalence", [
        ("max|LCA-FISTA|", fmt(lca_gap), 1e-3, lca_gap <= 1e-3),
        ("max|FISTA-bruteforce|", fmt(brute_gap), 1e-8, brute_gap <= 1e-8),
        ("max KKT", fmt(worst_kkt), 1e-5, worst_kkt <= 1e-5 and all_converged),
        ("runtime s", fmt(elapsed), 10, elapsed < 10),
    ])


def test_criterion_02_slca_convergence(capsys):
    start = time.perf_counter()
    eye = LassoProblem(np.eye(2), [1.0, 0.2], 0.5)
    ref = solve_lca(eye, tol=1e-10).a
    err_eye = float(np.linalg.norm(solve_slca(eye, window=20_000).a - ref) / np.linalg.norm(ref))
    geo = bf.ArrayGeometry(16)
    beam, _ = bf.build_lasso(bf.default_task(geo, lam_fraction=0.2), geo)
    ref = solve_lca(beam, tol=1e-8).a
    err_beam = float(np.linalg.norm(solve_slca(beam, window=20_000).a - ref) / np.linalg.norm(ref))
    elapsed = time.perf_counter() - start
    verdict(capsys, 2, "spiking LCA convergence", [
        ("rel L2 on I2", fmt(err_eye), 0.02, err_eye <= 0.02),
        ("rel L2 on N=16 beam task", fmt(err_beam), 0.05, err_beam <= 0.05),
        ("runtime s", fmt(elapsed), 60, elapsed < 60),
    ])


def test_criterion_03_rf_spectral_fidelity(capsys):
    n = 128
    worst_bin = 0.0
    for k in (1, 8, 32):
        x = np.cos(2 * np.pi * k * np.arange(n) / n).astype(complex)
        mag = np.sqrt(itf.rf_stft_features(x).bin_power[k])
        worst_bin = max(worst_bin, abs(mag - resonator_end_magnitude(k, n)) / (n / 2))
    x = np.array([itf.synth_signal(itf.SignalScenario(label=0, seed=s)) for s in range(100)])
    gap = float(np.max(np.abs(itf.rf_stft_features(x).shares - itf.fft_features(x).shares)))
    verdict(capsys, 3, "resonate-and-fire spectral fidelity", [
        ("worst on-bin |z| rel error", fmt(worst_bin), 0.05, worst_bin <= 0.05),
        ("rf vs fft Linf", fmt(gap), 0.05, gap <= 0.05),
    ])


def test_criterion_04_codec_round_trips(capsys):
    grid = np.round(np.arange(0, 101) / 100, 2)
    checks = []
    for steps in (16, 64, 256):
        rate_err = float(np.max(np.abs(decode_rate(encode_rate(grid, steps)) - grid)))
        ttfs_err = float(np.max(np.abs(decode_ttfs(encode_ttfs(grid, steps)) - grid)))
        r_lim, t_lim = 1 / (2 * steps) + 1 / steps, 1 / (2 * (steps - 1))
        checks.append((f"rate T={steps}", fmt(rate_err), fmt(r_lim), rate_err <= r_lim))
        checks.append((f"ttfs T={steps}", fmt(ttfs_err), fmt(t_lim), ttfs_err <= t_lim + 1e-12))
    mean = float(np.mean([encode_rate([0.3], 1000, "stochastic", seed=s).sum() for s in range(100)]))
    lo, hi = binomial_band(1000, 0.3)
    checks.append(("stochastic mean count", fmt(mean), f"[{lo:.1f}, {hi:.1f}]", lo <= mean <= hi))
    verdict(capsys, 4, "codec round trips", checks)


def test_criterion_05_gradient_check(capsys, rrm_run, id_run):
    setup, rrm_model = rrm_run
    ds, id_model = id_run
    rng = np.random.default_rng(0)
    cases = {
        "rrm trained": (rrm_model.ann, rrm_model.normalize(setup.data.grids[:8]), setup.labels[:8]),
        "id trained": (id_model.ann, id_model.normalize(ds.features[:8]), ds.labels[:8]),
    }
    for sizes in ([256, 64, 32], [4, 32, 5]):
        net = DenseNet.init(sizes, seed=3)
        net.biases = [rng.normal(size=b.shape) * 0.1 for b in net.biases]
        cases[f"init {sizes}"] = (net, rng.random((8, sizes[0])), rng.integers(0, sizes[-1], 8))
    checks = []
    for name, (net, x, y) in cases.items():
        err = grad_check(net, x, y, n_params=128, seed=1)
        checks.append((name, fmt(err), 1e-5, err <= 1e-5))
    verdict(capsys, 5, "analytic vs finite-difference gradients", checks)


def test_criterion_06_conversion_fidelity(capsys, rrm_run, id_run):
    setup, rrm_model = rrm_run
    ds, id_model = id_run
    steps = (16, 32, 64, 128)
    rrm_agree = [rrm.run_pipeline(setup, "snn", T, rrm_model, split_seed=42)["ann_agreement"] for T in steps]
    rate = [itf.run_pipeline(ds, "snn-rate", T, id_model)["ann_agreement"] for T in steps]
    ttfs = [itf.run_pipeline(ds, "snn-ttfs", T, id_model)["ann_agreement"] for T in steps]

    def monotone(seq):
        # one test sample of slack counts as a tie
        return all(b >= a - 1.0 / 200 for a, b in zip(seq, seq[1:]))

    verdict(capsys, 6, "ANN to SNN conversion fidelity", [
        ("rrm agreement T=16..128", rrm_agree, ">=0.95 at T=64, non-decreasing", rrm_agree[2] >= 0.95
         and monotone(rrm_agree)),
        ("id rate agreement", rate, ">=0.95 at T=64, non-decreasing", rate[2] >= 0.95 and monotone(rate)),
        ("id ttfs agreement", ttfs, ">=0.95 at T=64, non-decreasing", ttfs[2] >= 0.95 and monotone(ttfs)),
    ])


def test_criterion_07_use_case_quality(capsys, rrm_run, id_run):
    setup, rrm_model = rrm_run
    ds, id_model = id_run
    rrm_acc = rrm.run_pipeline(setup, "ann", model=rrm_model, split_seed=42)["agreement"]
    ann = itf.run_pipeline(ds, "ann", model=id_model)
    rate = itf.run_pipeline(ds, "snn-rate", 64, id_model)["accuracy"]
    ttfs = itf.run_pipeline(ds, "snn-ttfs", 64, id_model)["accuracy"]
    verdict(capsys, 7, "use-case quality", [
        ("rrm ANN oracle agreement", fmt(rrm_acc), 0.90, rrm_acc >= 0.90),
        ("id ANN accuracy", fmt(ann["accuracy"]), 0.95, ann["accuracy"] >= 0.95),
        ("id oracle minus ANN", fmt(ann["oracle_accuracy"] - ann["accuracy"]), 0.03,
         ann["oracle_accuracy"] - ann["accuracy"] <= 0.03),
        ("|rate - ttfs|", fmt(abs(rate - ttfs)), 0.03, abs(rate - ttfs) <= 0.03),
    ])


def test_criterion_08_beamforming_sparsity(capsys):
    geo = bf.ArrayGeometry(32)
    base = bf.default_task(geo)
    rows = bf.sweep_lambda(base, geo, [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4])
    good = [r for r in rows if r["off_fraction"] >= 0.6 and r["main_lobe_loss_db"] <= 3.0]
    best = max(rows, key=lambda r: (r["main_lobe_loss_db"] <= 3.0, r["off_fraction"]))
    task = bf.default_task(geo, lam_fraction=0.2)
    wf = bf.solve_beam(task, geo, "fista").w
    ws = bf.solve_beam(task, geo, "slca").w
    lobe = task.grid[task.main_lobe(geo)]
    lobe_gap = float(np.max(np.abs(bf.beampattern(ws, geo, lobe, db=True) - bf.beampattern(wf, geo, lobe, db=True))))
    verdict(capsys, 8, "beamforming sparsity", [
        ("best off-fraction within 3 dB", f"{best['off_fraction']:.3f} at loss {best['main_lobe_loss_db']:.3f} dB",
         ">=0.6", bool(good)),
        ("fista vs slca main lobe dB", fmt(lobe_gap), 0.5, lobe_gap <= 0.5),
    ])


def test_criterion_09_benchmark_algebra(capsys, tmp_path):
    records = []
    rng = np.random.default_rng(0)
    for i in range(4):
        w = Workload(f"w{i}", *(rng.uniform(1, 1e6, size=4).tolist()), steps=float(rng.integers(8, 256)))
        records += sweep_batches(w, [1, 10, 100], EnergyModel())[0]
    edp_err = max(abs(r.ratios[2] - r.ratios[0] * r.ratios[1]) for r in records)
    write_csv(tmp_path / "b.csv", records)
    write_json(tmp_path / "b.json", records)
    csv_ok = [r.row() for r in read_csv(tmp_path / "b.csv")] == [r.row() for r in records]
    json_ok = [r.row() for r in read_json(tmp_path / "b.json")] == [r.row() for r in records]
    write_svg(tmp_path / "b.svg", records)
    root = ET.parse(tmp_path / "b.svg").getroot()
    lines = [p for p in root.findall(f".//{SVG}path") if p.get("class") == "edp-line"]
    markers = root.findall(f".//{SVG}circle")
    verdict(capsys, 9, "benchmark algebra and reports", [
        ("max |edp - e*d|", fmt(edp_err), 0.0, edp_err == 0.0),
        ("csv round trip", csv_ok, True, csv_ok),
        ("json round trip", json_ok, True, json_ok),
        ("svg edp lines / markers", f"{len(lines)}/{len(markers)}", f"1/{len(records)}",
         len(lines) == 1 and len(markers) == len(records)),
    ])


SCENARIO = """seed = 11

[rrm]
shape = [8, 8]
samples = 200
hidden = 32

[id]
per_class = 40

[beam]
n = 16
grid_points = 128
snapshots = 256
sweep = [0.0, 0.1, 0.2, 1.0]
"""


def test_criterion_10_determinism(capsys, tmp_path):
    scen = tmp_path / "scenario.toml"
    scen.write_text(SCENARIO)
    values = tmp_path / "values.txt"
    values.write_text(" ".join(str(v) for v in np.linspace(0, 1, 11)))

    def run_all(out, threads):
        codes = [main(["rrm", "--scenario", str(scen), "--threads", str(threads), "--out", str(out)]),
                 main(["id", "--scenario", str(scen), "--threads", str(threads), "--out", str(out)]),
                 main(["beam", "--scenario", str(scen), "--threads", str(threads), "--out", str(out)]),
                 main(["bench", "--scenario", str(scen), "--threads", str(threads), "--out", str(out)]),
                 main(["encode", str(values), "--encoder", "rate-stochastic", "--scenario", str(scen),
                       "--threads", str(threads), "--out", str(out)])]
        files = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
        return codes, files

    runs = [run_all(tmp_path / name, threads) for name, threads in (("a", 1), ("b", 1), ("c", 4), ("d", 4))]
    codes_ok = all(c == [0] * 5 for c, _ in runs)
    first = runs[0][1]
    same = all(files == first for _, files in runs[1:])
    json.loads(first["rrm_report.json"])
    verdict(capsys, 10, "byte-identical reruns", [
        ("exit codes", [c for c, _ in runs][0], "all 0", codes_ok),
        ("files compared", len(first), ">0", len(first) > 0),
        ("identical across 2 runs x threads {1,4}", same, True, same),
    ])
