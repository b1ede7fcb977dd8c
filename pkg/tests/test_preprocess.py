import numpy as np
import pytest

from vitsoh.errors import ConfigError, CoverageError
from vitsoh.preprocess import (
    ChannelMinMaxScaler,
    SampleMatrix,
    SplitPlan,
    assemble_dataset,
    build_sample,
    build_samples,
    coulomb_count,
    discretize,
    extract_voltage_window,
    internal_resistance,
    load_dataset,
    save_dataset,
    soh_from_capacity,
    soh_from_resistance,
    split_dataset,
)
from vitsoh.simulator import (
    CycleRecord,
    FleetConfig,
    StepSeries,
    aged_state,
    generate_fleet,
    simulate_cycle,
)
from test_simulator import make_condition


def linear_voltage_record(slope=0.001, v0=3.0, duration=1500.0) -> CycleRecord:
    """CC step with V(t) = v0 + slope*t; other steps are placeholders."""
    t = np.arange(0.0, duration + 1.0)
    cc = StepSeries(time_s=t, current_a=np.full(t.size, 2.0),
                    voltage_v=v0 + slope * t,
                    temp_c=np.full(t.size, 25.0))
    stub = StepSeries(time_s=np.array([0.0, 1.0]),
                      current_a=np.zeros(2), voltage_v=np.full(2, 4.2),
                      temp_c=np.full(2, 25.0))
    return CycleRecord(cycle=0, cc_charge=cc, cv_charge=stub, rest=stub,
                       discharge=stub, discharge_capacity_ah=4.8)


# ----------------------------------------------------------------------
# window extraction
# ----------------------------------------------------------------------
class TestExtractVoltageWindow:
    def test_analytic_inversion(self):
        rec = linear_voltage_record()
        t_low, t_high = extract_voltage_window(rec, 3.4, 4.0)
        np.testing.assert_allclose((t_low, t_high), (400.0, 1000.0), atol=1e-9)

    def test_low_bound_at_first_sample(self):
        rec = linear_voltage_record()
        t_low, _ = extract_voltage_window(rec, 3.0, 4.0)
        assert t_low == 0.0

    def test_window_above_cutoff_fails(self):
        rec = linear_voltage_record(duration=500.0)  # tops out at 3.5 V
        with pytest.raises(CoverageError):
            extract_voltage_window(rec, 3.4, 4.0)

    def test_window_below_start_fails(self):
        rec = linear_voltage_record(v0=3.5)
        with pytest.raises(CoverageError):
            extract_voltage_window(rec, 3.4, 4.0)

    def test_inverted_window_rejected(self):
        with pytest.raises(ConfigError):
            extract_voltage_window(linear_voltage_record(), 4.0, 3.4)


# ----------------------------------------------------------------------
# discretization
# ----------------------------------------------------------------------
class TestDiscretize:
    def test_constant_series(self):
        t = np.arange(0.0, 11.0)
        out = discretize(t, np.full(11, 7.7), 2.0, 9.0, 5)
        np.testing.assert_array_equal(out, np.full(5, 7.7))

    def test_linear_exactness(self):
        t = np.arange(0.0, 11.0)
        out = discretize(t, t.copy(), 0.0, 10.0, 5)
        np.testing.assert_allclose(out, [0.0, 2.5, 5.0, 7.5, 10.0])

    def test_sine_within_interpolation_bound(self):
        # linear interpolation error bound: h^2 * max|f''| / 8 with h = 1 s
        t = np.arange(0.0, 21.0)
        series = np.sin(t)
        grid = np.linspace(2.5, 17.5, 31)
        out = discretize(t, series, 2.5, 17.5, 31)
        assert np.max(np.abs(out - np.sin(grid))) <= 1.0 / 8.0 + 1e-12

    def test_insufficient_coverage(self):
        t = np.arange(0.0, 5.0)
        with pytest.raises(CoverageError):
            discretize(t, t.copy(), 0.0, 10.0, 4)

    def test_too_few_points(self):
        t = np.arange(0.0, 5.0)
        with pytest.raises(ConfigError):
            discretize(t, t.copy(), 0.0, 4.0, 1)


# ----------------------------------------------------------------------
# derived quantities
# ----------------------------------------------------------------------
class TestCoulombCount:
    def test_constant_current_hand_integration(self):
        t = np.arange(0.0, 3601.0)
        out = coulomb_count(t, np.ones(t.size), 4.8, eta=1.0)
        np.testing.assert_allclose(out[-1], 3.8, rtol=1e-12)
        np.testing.assert_allclose(out[0], 4.8)

    def test_zero_current(self):
        t = np.arange(0.0, 100.0)
        out = coulomb_count(t, np.zeros(t.size), 4.8)
        np.testing.assert_array_equal(out, np.full(t.size, 4.8))

    def test_zero_efficiency(self):
        t = np.arange(0.0, 100.0)
        out = coulomb_count(t, np.ones(t.size), 4.8, eta=0.0)
        np.testing.assert_array_equal(out, np.full(t.size, 4.8))


class TestScalarOps:
    def test_internal_resistance(self):
        assert internal_resistance(0.1, 2.0) == pytest.approx(0.05)
        assert internal_resistance(0.0, 3.0) == 0.0
        with pytest.raises(ZeroDivisionError):
            internal_resistance(0.1, 0.0)

    def test_soh_from_capacity(self):
        assert soh_from_capacity(4.8, 4.8) == 1.0
        assert soh_from_capacity(2.4, 4.8) == 0.5
        assert soh_from_capacity(0.0, 4.8) == 0.0
        with pytest.raises(ValueError):
            soh_from_capacity(1.0, 0.0)

    def test_soh_from_resistance(self):
        assert soh_from_resistance(0.05, 0.05, 0.10) == 1.0
        assert soh_from_resistance(0.10, 0.05, 0.10) == 0.0
        assert soh_from_resistance(0.06, 0.05, 0.10) == pytest.approx(0.8)
        with pytest.raises(ValueError):
            soh_from_resistance(0.06, 0.10, 0.10)


# ----------------------------------------------------------------------
# sample assembly
# ----------------------------------------------------------------------
class TestBuildSample:
    def test_raw_shape(self):
        cond = make_condition()
        rec = simulate_cycle(cond, 0, noise=False)
        sample = build_sample(rec, channels="raw", v_low=3.4, v_high=4.0,
                              points=50, c_fresh_ah=cond.c_fresh_ah)
        assert sample.x.shape == (3, 50)
        assert sample.channels == ("current", "voltage", "temperature")

    def test_supplementary_shape_and_constant_resistance_row(self):
        cond = make_condition()
        rec = simulate_cycle(cond, 0, noise=False)
        sample = build_sample(rec, channels="supplementary", v_low=3.4,
                              v_high=4.0, points=50,
                              c_fresh_ah=cond.c_fresh_ah, r_in=0.0031)
        assert sample.x.shape == (5, 50)
        np.testing.assert_array_equal(sample.x[4], np.full(50, 0.0031))

    def test_fresh_cell_label_near_one(self):
        cond = make_condition()
        rec = simulate_cycle(cond, 0, noise=False)
        sample = build_sample(rec, channels="raw", v_low=3.4, v_high=4.0,
                              points=50, c_fresh_ah=cond.c_fresh_ah)
        assert abs(sample.y - 1.0) < 0.005

    def test_supplementary_without_pulse_errors(self):
        rec = simulate_cycle(make_condition(), 0, noise=False)
        with pytest.raises(ConfigError):
            build_sample(rec, channels="supplementary", v_low=3.4, v_high=4.0,
                         points=50, c_fresh_ah=4.8, r_in=None)

    def test_build_samples_carries_pulse_forward(self):
        cfg = FleetConfig(seed=5, cells=1, max_cycles=20, cycle_stride=5,
                          capacity_test_interval=10, noise=False)
        fleet = generate_fleet(cfg)
        samples, skipped = build_samples(
            fleet.cycles, {"cell_01": cfg.c_fresh_ah},
            channels="supplementary", v_low=3.4, v_high=4.0, points=40)
        assert not skipped
        by_cycle = {s.cycle: s for s in samples}
        # cycles 5 and 15 reuse the pulse from 0 and 10 respectively
        np.testing.assert_array_equal(by_cycle[5].x[4], by_cycle[0].x[4])
        np.testing.assert_array_equal(by_cycle[15].x[4], by_cycle[10].x[4])
        assert not np.array_equal(by_cycle[0].x[4], by_cycle[10].x[4])

    def test_label_invariant_enforced(self):
        rec = simulate_cycle(make_condition(), 0, noise=False)
        # a fresh capacity far below the measured one pushes y above 1.05
        with pytest.raises(ConfigError):
            build_sample(rec, channels="raw", v_low=3.4, v_high=4.0,
                         points=50, c_fresh_ah=rec.discharge_capacity_ah / 2.0)

    def test_soh_matches_fade_curve_on_capacity_test_cycles(self):
        cond = make_condition()
        for k in (0, 50, 100):
            rec = simulate_cycle(cond, k, noise=False)
            sample = build_sample(rec, channels="raw", v_low=3.4, v_high=4.0,
                                  points=30, c_fresh_ah=cond.c_fresh_ah)
            expected = aged_state(cond, k)[0] / cond.c_fresh_ah
            assert abs(sample.y - expected) / expected < 0.005


# ----------------------------------------------------------------------
# splits
# ----------------------------------------------------------------------
def synthetic_samples(n_per_cell: dict[str, int]) -> list[SampleMatrix]:
    samples = []
    for cell, n in n_per_cell.items():
        for k in range(n):
            samples.append(SampleMatrix(
                x=np.zeros((2, 4)) + k, y=1.0, cell_id=cell, cycle=k * 5,
                channels=("a", "b")))
    return samples


class TestSplitDataset:
    def test_counting_rule(self):
        samples = synthetic_samples({"s1": 50, "s2": 50, "t1": 10})
        plan = SplitPlan(("s1", "s2"), ("t1",), train_ratio=0.5,
                         target_train_cycles=4, seed=9)
        splits = split_dataset(samples, plan)
        assert splits["source_train"].size == 40
        assert splits["source_val"].size == 10
        assert splits["source_test"].size == 50
        assert splits["target_train"].size == 4
        assert splits["target_test"].size == 6

    def test_partition_disjoint_and_exhaustive(self):
        samples = synthetic_samples({"s1": 33, "t1": 11})
        plan = SplitPlan(("s1",), ("t1",), 0.7, 4, seed=1)
        splits = split_dataset(samples, plan)
        source = np.concatenate([splits["source_train"], splits["source_val"],
                                 splits["source_test"]])
        target = np.concatenate([splits["target_train"], splits["target_test"]])
        assert sorted(source) == [i for i, s in enumerate(samples)
                                  if s.cell_id == "s1"]
        assert sorted(target) == [i for i, s in enumerate(samples)
                                  if s.cell_id == "t1"]
        assert len(set(source)) == source.size
        assert len(set(target)) == target.size

    def test_target_train_is_lowest_cycles(self):
        samples = synthetic_samples({"s1": 20, "t1": 300})
        plan = SplitPlan(("s1",), ("t1",), 0.5, 4, seed=2)
        splits = split_dataset(samples, plan)
        assert splits["target_train"].size == 4
        assert splits["target_test"].size == 296
        train_cycles = sorted(samples[i].cycle for i in splits["target_train"])
        all_cycles = sorted(s.cycle for s in samples if s.cell_id == "t1")
        assert train_cycles == all_cycles[:4]

    def test_deterministic(self):
        samples = synthetic_samples({"s1": 40, "t1": 8})
        plan = SplitPlan(("s1",), ("t1",), 0.6, 2, seed=77)
        a = split_dataset(samples, plan)
        b = split_dataset(samples, plan)
        for key in a:
            np.testing.assert_array_equal(a[key], b[key])

    def test_empty_split_rejected(self):
        samples = synthetic_samples({"s1": 10, "t1": 4})
        plan = SplitPlan(("s1",), ("t1",), 0.5, 4, seed=0)  # target_test empty
        with pytest.raises(ConfigError):
            split_dataset(samples, plan)

    def test_plan_validation(self):
        with pytest.raises(ConfigError):
            SplitPlan(("a",), ("a",), 0.5, 4)
        with pytest.raises(ConfigError):
            SplitPlan(("a",), ("b",), 1.0, 4)
        with pytest.raises(ConfigError):
            SplitPlan(("a",), ("b",), 0.5, 0)


# ----------------------------------------------------------------------
# scaler
# ----------------------------------------------------------------------
class TestChannelMinMaxScaler:
    def test_affine_hand_example(self):
        x = np.array([[[3.4, 4.0, 3.7]]])  # one sample, one channel
        scaler = ChannelMinMaxScaler().fit(x)
        out = scaler.transform(np.array([[[3.7]]]))
        np.testing.assert_allclose(out, [[[0.5]]])

    def test_train_min_maps_to_zero(self, rng):
        x = rng.normal(size=(10, 3, 7))
        scaler = ChannelMinMaxScaler().fit(x)
        out = scaler.transform(x)
        np.testing.assert_allclose(out.min(axis=(0, 2)), np.zeros(3), atol=1e-12)
        np.testing.assert_allclose(out.max(axis=(0, 2)), np.ones(3), atol=1e-12)
        assert np.all(out >= 0.0) and np.all(out <= 1.0)

    def test_roundtrip_identity(self, rng):
        x = rng.normal(size=(6, 2, 5)) * 4.0
        scaler = ChannelMinMaxScaler().fit(x)
        back = scaler.inverse_transform(scaler.transform(x))
        np.testing.assert_allclose(back, x, atol=1e-9)

    def test_degenerate_channel_maps_to_half_with_warning(self, rng):
        x = rng.normal(size=(5, 2, 4))
        x[:, 1, :] = 2.0
        with pytest.warns(UserWarning):
            scaler = ChannelMinMaxScaler().fit(x)
        out = scaler.transform(x)
        np.testing.assert_array_equal(out[:, 1, :], np.full((5, 4), 0.5))

    def test_no_clamping_outside_training_range(self, rng):
        x = rng.uniform(0.0, 1.0, size=(4, 1, 5))
        scaler = ChannelMinMaxScaler().fit(x)
        out = scaler.transform(np.full((1, 1, 5), 2.0))
        assert np.all(out > 1.0)

    def test_unfitted_rejected(self):
        with pytest.raises(ConfigError):
            ChannelMinMaxScaler().transform(np.zeros((1, 1, 2)))

    def test_serialization_roundtrip(self, rng):
        x = rng.normal(size=(5, 3, 4))
        scaler = ChannelMinMaxScaler().fit(x)
        clone = ChannelMinMaxScaler.from_dict(scaler.to_dict())
        np.testing.assert_array_equal(scaler.transform(x), clone.transform(x))


# ----------------------------------------------------------------------
# dataset files
# ----------------------------------------------------------------------
class TestDatasetFiles:
    def _toy_dataset(self):
        # cells 1 and 4 differ in charge rate, keeping every channel spanned
        cfg = FleetConfig(seed=8, cells=4, max_cycles=30, cycle_stride=5,
                          capacity_test_interval=10, noise=False)
        fleet = generate_fleet(cfg)
        samples, _ = build_samples(
            fleet.cycles, {c.cell_id: c.c_fresh_ah for c in fleet.conditions},
            channels="raw", v_low=3.4, v_high=4.0, points=20)
        plan = SplitPlan(("cell_01", "cell_03", "cell_04"), ("cell_02",),
                         0.7, 2, seed=4)
        return assemble_dataset(samples, plan, v_low=3.4, v_high=4.0, seed=4)

    def test_roundtrip(self, tmp_path):
        dataset = self._toy_dataset()
        save_dataset(dataset, tmp_path)
        loaded = load_dataset(tmp_path)
        # blob is float32, so compare at float32 resolution
        np.testing.assert_allclose(loaded.x, dataset.x, rtol=1e-6, atol=1e-6)
        np.testing.assert_array_equal(loaded.y.astype(np.float32),
                                      dataset.y.astype(np.float32))
        assert loaded.cells == dataset.cells
        assert loaded.channels == dataset.channels
        for key in dataset.splits:
            np.testing.assert_array_equal(loaded.splits[key],
                                          dataset.splits[key])
        np.testing.assert_array_equal(loaded.scaler.data_min_,
                                      dataset.scaler.data_min_)
        assert loaded.plan == dataset.plan

    def test_scaler_fitted_on_source_train_only(self):
        dataset = self._toy_dataset()
        x_train, _ = dataset.split_arrays("source_train", scaled=True)
        assert x_train.min() >= 0.0 and x_train.max() <= 1.0

    def test_index_contents(self, tmp_path):
        import json
        dataset = self._toy_dataset()
        save_dataset(dataset, tmp_path)
        index = json.loads((tmp_path / "index.json").read_text())
        assert index["format_version"] == 1
        assert index["channels"] == ["current", "voltage", "temperature"]
        assert index["points"] == 20
        sample_bytes = 3 * 20 * 4
        offsets = [s["offset"] for s in index["samples"]]
        assert offsets == [i * sample_bytes for i in range(len(offsets))]
        blob_size = (tmp_path / index["blob"]).stat().st_size
        assert blob_size == len(offsets) * sample_bytes
