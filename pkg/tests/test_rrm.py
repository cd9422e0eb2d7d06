import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import best_config, capacity, enumerate_configs
from spikesat.errors import ConfigError, DomainError
from spikesat.rrm import (BeamModel, ConfigPool, RrmScenario, build_setup, diurnal_envelope, enumerate_feasible,
                          generate_demands, label_oracle, offered_capacity, oracle_mismatch, prune_pool,
                          read_dataset_csv, run_pipeline, service_disc, write_dataset)

SMALL = dict(powers=[1, 2], bandwidths=[100, 200], beams=2, p_total=3, w_total=300)


def pair_model(gamma=1.0):
    """Two grid points, one per beam, so a grid is its own per-beam demand."""
    return BeamModel(np.array([[0, 1]]), np.full(2, gamma))


def test_enumeration_counts():
    assert len(enumerate_feasible([1, 2], [100], 1, 2, 100)) == 2
    pool = enumerate_feasible(**SMALL)
    ref = enumerate_configs([1, 2], [100, 200], 2, 3, 300)
    # 16 combinations; 4 exceed the power total, 4 the bandwidth total, 1 both
    assert len(pool) == len(ref) == 9
    assert [tuple(map(tuple, c)) for c in pool.configs.tolist()] == [tuple(map(tuple, c)) for c in ref]
    full = enumerate_feasible([1, 2, 3], [10, 20], 3, 9, 60)
    assert len(full) == 3 ** 3 * 2 ** 3


def test_enumeration_errors():
    with pytest.raises(ConfigError):
        enumerate_feasible([5], [100], 2, 1, 1000)
    with pytest.raises(ConfigError):
        enumerate_feasible([], [100], 1, 10, 100)
    with pytest.raises(ConfigError):
        ConfigPool(np.array([[[1, 100]], [[1, 100]]]))


def test_capacity_examples():
    model = BeamModel(np.zeros((1, 1), dtype=int), [1.0])
    assert offered_capacity(np.array([[1.0, 100.0]]), model)[0] == 100.0
    assert np.isclose(offered_capacity(np.array([[3.0, 100.0]]), model)[0], 200.0)
    assert offered_capacity(np.array([[1000.0, 100.0]]), model)[0] == 600.0


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 100.0), st.floats(0.0, 100.0), st.floats(1.0, 500.0), st.floats(1.0, 500.0),
       st.floats(0.01, 10.0))
def test_capacity_monotone(p1, p2, w1, w2, gamma):
    model = BeamModel(np.zeros((1, 1), dtype=int), [gamma])
    lo = offered_capacity(np.array([[min(p1, p2), min(w1, w2)]]), model)[0]
    hi = offered_capacity(np.array([[max(p1, p2), max(w1, w2)]]), model)[0]
    assert hi >= lo
    assert np.isclose(lo, capacity(min(p1, p2), min(w1, w2), gamma))


def test_label_example():
    pool = enumerate_feasible(**SMALL)
    model = pair_model()
    demand = np.array([[150.0, 120.0]])
    label = label_oracle(demand, pool, model)
    assert pool[label].pairs() == [(2.0, 100.0), (1.0, 100.0)]
    assert np.isclose(oracle_mismatch(demand[None], pool, model)[0], 28.4963, atol=1e-4)
    ref_idx, ref_mis = best_config([150.0, 120.0], enumerate_configs([1, 2], [100, 200], 2, 3, 300), [1, 1])
    assert label == ref_idx and np.isclose(ref_mis, 28.4963, atol=1e-4)


def test_exact_capacity_demand_and_zero_demand():
    pool = enumerate_feasible(**SMALL)
    model = pair_model()
    caps = offered_capacity(pool.configs, model)
    for c in range(len(pool)):
        assert label_oracle(caps[c][None], pool, model) == c
    zero = label_oracle(np.zeros((1, 2)), pool, model)
    assert zero == int(np.argmin(caps.sum(axis=1)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_oracle_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    powers = sorted(rng.choice([1, 2, 4, 8], size=2, replace=False).tolist())
    bands = sorted(rng.choice([50, 100, 200], size=2, replace=False).tolist())
    p_total = float(rng.integers(4, 17))
    w_total = float(rng.integers(150, 601))
    try:
        pool = enumerate_feasible(powers, bands, 2, p_total, w_total)
    except ConfigError:
        return
    gamma = rng.uniform(0.1, 2.0, size=2)
    model = BeamModel(np.array([[0, 1]]), gamma)
    demand = rng.uniform(0, 800, size=2)
    ref_idx, ref_mis = best_config(demand, enumerate_configs(powers, bands, 2, p_total, w_total), gamma)
    assert label_oracle(demand[None], pool, model) == ref_idx
    assert math.isclose(oracle_mismatch(demand[None, None], pool, model)[0], ref_mis, rel_tol=1e-12, abs_tol=1e-9)


def test_labels_index_feasible_configs():
    pool = enumerate_feasible(**SMALL)
    data = generate_demands((8, 8), 2, 200, seed=1, mean_total=400)
    model = BeamModel.tiled((8, 8), 2, data.mask, 1.0)
    labels = label_oracle(data.grids, pool, model)
    chosen = pool.configs[labels]
    assert np.all(chosen[:, :, 0].sum(axis=1) <= 3) and np.all(chosen[:, :, 1].sum(axis=1) <= 300)


def test_masked_points_never_change_labels():
    rng = np.random.default_rng(0)
    data = generate_demands((10, 10), 4, 100, seed=3, mean_total=1200)
    model = BeamModel.tiled((10, 10), 4, data.mask, 0.2)
    pool = enumerate_feasible([10, 20, 40], [100, 200, 400], 4, 80, 800)
    base = label_oracle(data.grids, pool, model)
    poked = data.grids + rng.uniform(0, 1e4, size=data.grids.shape) * ~data.mask[None]
    assert np.array_equal(label_oracle(poked, pool, model), base)


def test_threads_do_not_change_labels():
    data = generate_demands((8, 8), 4, 300, seed=2)
    model = BeamModel.tiled((8, 8), 4, data.mask, 0.2)
    pool = enumerate_feasible([10, 20, 40], [100, 200, 400], 4, 80, 800)
    a = label_oracle(data.grids, pool, model, chunk=17)
    b = label_oracle(data.grids, pool, model, chunk=17, threads=4)
    assert np.array_equal(a, b)


def test_prune_keep_all_is_identity():
    pool = enumerate_feasible(**SMALL)
    demands = np.random.default_rng(0).uniform(0, 400, size=(30, 1, 2))
    pruned, remap = prune_pool(pool, demands, pair_model(), 1.0)
    assert np.array_equal(pruned.configs, pool.configs)
    assert remap.tolist() == list(range(len(pool)))
    assert pruned.counts.sum() == 30


def test_prune_keeps_exactly_the_selected_configs():
    pool = enumerate_feasible(**SMALL)
    model = pair_model()
    caps = offered_capacity(pool.configs, model)
    chosen = [1, 4, 7]
    demands = np.concatenate([np.repeat(caps[c][None, None], reps, axis=0) for c, reps in zip(chosen, (3, 5, 2))])
    pruned, remap = prune_pool(pool, demands, model, 0.25)
    assert len(pruned) == math.ceil(0.25 * len(pool)) == 3
    assert np.array_equal(pruned.configs, pool.configs[chosen])
    assert pruned.counts.tolist() == [3, 5, 2]
    assert [int(remap[c]) for c in chosen] == [0, 1, 2] and np.sum(remap >= 0) == 3


def test_pruning_never_improves_fit():
    data = generate_demands((8, 8), 4, 300, seed=5)
    model = BeamModel.tiled((8, 8), 4, data.mask, 0.2)
    pool = enumerate_feasible([10, 20, 40], [100, 200, 400], 4, 80, 800)
    pruned, _ = prune_pool(pool, data.grids, model, 0.05)
    assert np.all(oracle_mismatch(data.grids, pruned, model) >= oracle_mismatch(data.grids, pool, model))
    with pytest.raises(DomainError):
        prune_pool(pool, data.grids, model, 0.0)


def test_pool_dict_round_trip():
    pool = enumerate_feasible(**SMALL)
    pool.counts = np.arange(len(pool))
    back = ConfigPool.from_dict(pool.to_dict())
    assert np.array_equal(back.configs, pool.configs) and np.array_equal(back.counts, pool.counts)


def test_generator_determinism_mask_and_sign():
    a = generate_demands(steps=50, seed=9)
    b = generate_demands(steps=50, seed=9)
    assert np.array_equal(a.grids, b.grids)
    assert np.all(a.grids >= 0)
    assert np.all(a.grids[:, ~a.mask] == 0)
    assert not np.array_equal(a.grids, generate_demands(steps=50, seed=10).grids)
    assert np.array_equal(a.mask, service_disc((16, 16)))


def test_envelope_periodicity():
    phases = np.array([0.3, 2.0, 4.1])
    tau = np.arange(0, 300, 7.0)
    assert np.allclose(diurnal_envelope(tau, phases, 96.0, 0.8), diurnal_envelope(tau + 96.0, phases, 96.0, 0.8),
                       atol=1e-12)


def test_small_pool_class_diversity():
    pool = enumerate_feasible(**SMALL)
    data = generate_demands(beams=2, steps=1000, seed=42, mean_total=400)
    model = BeamModel.tiled((16, 16), 2, data.mask, 1.0)
    assert np.unique(label_oracle(data.grids, pool, model)).size >= 6


def test_beam_tiling_covers_service_area():
    mask = service_disc((16, 16))
    model = BeamModel.tiled((16, 16), 4, mask, 0.2)
    assert np.all(model.assignment[mask] >= 0) and np.all(model.assignment[~mask] == -1)
    assert set(np.unique(model.assignment[mask]).tolist()) == {0, 1, 2, 3}


def test_scenario_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        RrmScenario.from_dict({"beams": 4, "bogus": 1})
    assert RrmScenario.from_dict(RrmScenario().to_dict()) == RrmScenario()


@pytest.fixture(scope="module")
def small_setup():
    sc = RrmScenario(shape=(8, 8), samples=300, hidden=32)
    return build_setup(sc, seed=3)


def test_oracle_as_predictor_is_self_consistent(small_setup):
    labels = label_oracle(small_setup.data.grids, small_setup.pool, small_setup.model)
    assert np.array_equal(labels, small_setup.labels)
    assert len(small_setup.pool) <= 32 and small_setup.full_pool_size == 1024


def test_pipeline_reports(small_setup):
    ann = run_pipeline(small_setup, "ann")
    snn = run_pipeline(small_setup, "snn", steps=32)
    assert 0 <= ann["agreement"] <= 1 and ann["n_test"] == 60
    ev = snn["events"]
    assert ev["samples"] == 60 and ev["steps"] == 32 and ev["spikes"] > 0
    assert ev["syn_events"] >= ev["spikes"]
    with pytest.raises(DomainError):
        run_pipeline(small_setup, "hybrid")


def test_dataset_csv_round_trip(tmp_path, small_setup):
    write_dataset(tmp_path / "rrm", small_setup)
    grids = read_dataset_csv(tmp_path / "rrm.csv", (8, 8))
    assert np.array_equal(grids, small_setup.data.grids)
    assert (tmp_path / "rrm.json").exists()
