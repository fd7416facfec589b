from dataclasses import replace

import numpy as np
import pytest

from twobitfed.aggregation import GlobalModelState, aggregate_round, assign_locations
from twobitfed.fixedpoint import FixedPointConfig
from twobitfed.harness import (
    IdxSpec,
    RoundMetrics,
    SimulationConfig,
    dp_fedavg_aggregate,
    emit_metrics,
    fedavg_aggregate,
    load_config,
    parse_config,
    read_metrics,
    run_simulation,
)
from twobitfed.mapping import map_update
from twobitfed.training import (
    Dataset,
    ModelSpec,
    SynthSpec,
    TrainConfig,
    init_model,
    local_train,
    partition_dataset,
    synth_dataset,
)

FAST = SimulationConfig(
    rounds=4,
    e=2,
    dataset=SynthSpec(clusters=2, dims=2, samples=310, spread=1.0),
)


class TestFedavgAggregate:
    def test_idempotent_on_copies(self):
        w = np.array([1.0, -2.0, 3.0])
        assert np.array_equal(fedavg_aggregate([w, w.copy()]), w)

    def test_simple_mean(self):
        out = fedavg_aggregate([np.array([0.0, 2.0]), np.array([2.0, 0.0])])
        assert out.tolist() == [1.0, 1.0]

    def test_matches_summation(self):
        rng = np.random.default_rng(3)
        vectors = [rng.normal(size=11) for _ in range(7)]
        total = np.zeros(11)
        for v in vectors:
            total += v
        np.testing.assert_allclose(fedavg_aggregate(vectors), total / 7, rtol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            fedavg_aggregate([np.zeros(3), np.zeros(4)])

    def test_empty(self):
        with pytest.raises(ValueError):
            fedavg_aggregate([])


class TestDpFedavgAggregate:
    def test_no_noise_large_clip_equals_fedavg(self):
        rng = np.random.default_rng(5)
        vectors = [rng.normal(size=9) for _ in range(4)]
        out = dp_fedavg_aggregate(vectors, noise_sigma=0.0, clip_norm=1e9, seed=0)
        assert np.array_equal(out, fedavg_aggregate(vectors))

    def test_clipping_rescales_to_clip_norm(self):
        v = np.ones(4)  # norm 2
        out = dp_fedavg_aggregate([v], noise_sigma=0.0, clip_norm=1.0, seed=0)
        assert np.linalg.norm(out) == pytest.approx(1.0, rel=1e-12)

    def test_per_coordinate_variance(self):
        # averaging n per-client noises leaves sigma^2 / n per coordinate
        n, sigma, trials = 4, 0.5, 10_000
        samples = np.array(
            [
                dp_fedavg_aggregate(
                    [np.zeros(2)] * n, noise_sigma=sigma, clip_norm=1.0, seed=seed
                )[0]
                for seed in range(trials)
            ]
        )
        assert samples.var() == pytest.approx(sigma**2 / n, rel=0.1)

    def test_deterministic_given_seed(self):
        vectors = [np.ones(3), -np.ones(3)]
        a = dp_fedavg_aggregate(vectors, 0.2, 1.0, seed=9)
        b = dp_fedavg_aggregate(vectors, 0.2, 1.0, seed=9)
        assert np.array_equal(a, b)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            dp_fedavg_aggregate([np.zeros(2)], noise_sigma=-1.0, clip_norm=1.0, seed=0)
        with pytest.raises(ValueError):
            dp_fedavg_aggregate([np.zeros(2)], noise_sigma=0.0, clip_norm=0.0, seed=0)


class TestRunSimulation:
    def test_single_node_fedavg_equals_standalone(self):
        base = replace(FAST, n=1, rounds=5, seed=3)
        fed = run_simulation(replace(base, method="fedavg"))
        solo = run_simulation(replace(base, method="standalone"))
        assert [m.accuracy for m in fed] == [m.accuracy for m in solo]

    def test_uplink_accounting(self):
        param_count = FAST.model.param_count
        twobit = run_simulation(replace(FAST, method="twobit", seed=1))
        fedavg = run_simulation(replace(FAST, method="fedavg", seed=1))
        solo = run_simulation(replace(FAST, method="standalone", seed=1))
        assert all(m.uplink_bits == FAST.n * 2 * param_count for m in twobit)
        assert all(m.uplink_bits == FAST.n * FAST.p * param_count for m in fedavg)
        assert all(m.uplink_bits == 0 for m in solo)

    def test_cumulative_bits_grow_linearly(self):
        metrics = run_simulation(replace(FAST, method="twobit", seed=1))
        totals = np.cumsum([m.uplink_bits for m in metrics])
        assert np.array_equal(np.diff(totals), [metrics[0].uplink_bits] * (len(metrics) - 1))

    def test_seed_determinism_serial_and_parallel(self):
        serial = run_simulation(replace(FAST, method="twobit", seed=11))
        again = run_simulation(replace(FAST, method="twobit", seed=11))
        parallel = run_simulation(replace(FAST, method="twobit", seed=11, parallel=True))
        assert serial == again == parallel

    def test_methods_record_expected_metric_fields(self):
        twobit = run_simulation(replace(FAST, method="twobit", seed=2))[0]
        assert twobit.m is not None and twobit.recon_err_mean is not None
        fedavg = run_simulation(replace(FAST, method="fedavg", seed=2))[0]
        assert fedavg.m is None and fedavg.recon_err_mean is None

    def test_round_indices_are_sequential(self):
        metrics = run_simulation(replace(FAST, method="fedavg", seed=4))
        assert [m.round for m in metrics] == list(range(FAST.rounds))

    def test_accuracies_in_unit_interval(self):
        for method in ("twobit", "fedavg", "dp_fedavg", "standalone"):
            metrics = run_simulation(replace(FAST, method=method, seed=5, noise_sigma=0.05))
            assert all(0.0 <= m.accuracy <= 1.0 for m in metrics)

    def test_fl_beats_standalone_on_default_task(self):
        final = {}
        for method in ("twobit", "fedavg", "dp_fedavg", "standalone"):
            cfg = SimulationConfig(method=method, seed=0, noise_sigma=0.01)
            final[method] = run_simulation(cfg)[-1].accuracy
        assert final["twobit"] >= final["standalone"]
        assert final["fedavg"] >= final["standalone"]
        assert final["dp_fedavg"] >= final["standalone"]

    def test_monotone_m_column_never_decreases(self):
        metrics = run_simulation(replace(FAST, method="twobit", seed=6, rounds=6))
        ms = [m.m for m in metrics]
        assert all(a <= b or abs(a - b) < 1e-15 for a, b in zip(ms, ms[1:]))


def test_twobit_matches_fedavg_under_unanimity():
    """With identical deltas everywhere and full location coverage, the
    voted reconstruction recovers the shared delta to one quantization
    step per parameter."""
    p = 48
    n = p - 1
    spec = ModelSpec("logistic_regression", 2, 2)
    data = synth_dataset(SynthSpec(clusters=2, dims=2, samples=200, spread=1.0), seed=1)
    part = partition_dataset(data, 1, seed=1)
    w = init_model(spec, seed=1)
    trained = local_train(
        w,
        part.shards[0],
        TrainConfig(local_epochs=2, learning_rate=0.1, batch_size=16, seed=2),
        spec,
    )
    delta = trained - w
    m = 1.0
    cfg = FixedPointConfig(p=p, m=m)
    assignment = assign_locations(n, p, rng_seed=7)
    updates = [
        map_update(delta, cfg, assignment.base_locations[i], node_id=i) for i in range(n)
    ]
    state = GlobalModelState(weights=w, m=m, round=0)
    out = aggregate_round(updates, assignment, state, cfg)
    fedavg_target = w + fedavg_aggregate([delta] * n)
    assert np.max(np.abs(out.weights - fedavg_target)) <= m / 2 ** (p - 1)


class TestMetricsIO:
    METRICS = [
        RoundMetrics(0, 0.5, 372, 1.0, 0.01, 0.02),
        RoundMetrics(1, 0.75, 372, 1.0, 0.005, 0.01),
        RoundMetrics(2, 0.875, 372, None, None, None),
    ]

    def test_csv_line_count_and_header(self, tmp_path):
        path = tmp_path / "metrics.csv"
        emit_metrics(self.METRICS, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 4
        assert lines[0] == "round,accuracy,uplink_bits,m,recon_err_mean,recon_err_max"

    def test_reemit_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_metrics(self.METRICS, a)
        emit_metrics(self.METRICS, b)
        assert a.read_bytes() == b.read_bytes()

    def test_round_trip(self, tmp_path):
        path = tmp_path / "metrics.csv"
        emit_metrics(self.METRICS, path)
        assert read_metrics(path) == self.METRICS

    def test_kv_format(self, tmp_path):
        path = tmp_path / "metrics.kv"
        emit_metrics(self.METRICS, path, fmt="kv")
        lines = path.read_text().splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("round=0 accuracy=0.5 ")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            emit_metrics(self.METRICS, tmp_path / "x", fmt="yaml")


CONFIG_TEXT = """
# sample simulation
method = twobit
n = 5
p = 8
e = 2
rounds = 3
seed = 42
m_initial = 0.5
parallel = true
model.kind = mlp_one_hidden
model.input_dim = 2
model.num_classes = 2
model.hidden_dim = 6
dataset.kind = synth
dataset.samples = 200
dataset.spread = 0.8
train.learning_rate = 0.05
train.batch_size = 8
"""


class TestConfigParsing:
    def test_parses_values_and_defaults(self):
        cfg = parse_config(CONFIG_TEXT)
        assert cfg.method == "twobit" and cfg.n == 5 and cfg.p == 8
        assert cfg.e == 2 and cfg.rounds == 3 and cfg.seed == 42
        assert cfg.m_initial == 0.5 and cfg.parallel is True
        assert cfg.model == ModelSpec("mlp_one_hidden", 2, 2, hidden_dim=6)
        assert cfg.dataset == SynthSpec(clusters=2, dims=2, samples=200, spread=0.8)
        assert cfg.train.learning_rate == 0.05 and cfg.train.batch_size == 8
        assert cfg.m_mode == "monotone" and cfg.payload == "delta"

    def test_idx_dataset_keys(self):
        cfg = parse_config(
            "dataset.kind = idx\ndataset.images = /tmp/i\ndataset.labels = /tmp/l\n"
        )
        assert cfg.dataset == IdxSpec(images="/tmp/i", labels="/tmp/l")

    def test_idx_requires_both_paths(self):
        with pytest.raises(ValueError):
            parse_config("dataset.kind = idx\ndataset.images = /tmp/i\n")

    def test_unknown_key_rejected_with_line(self):
        with pytest.raises(ValueError, match="line 2"):
            parse_config("n = 3\nbogus = 1\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ValueError, match="bad value"):
            parse_config("n = lots\n")

    def test_missing_equals_rejected(self):
        with pytest.raises(ValueError, match="key = value"):
            parse_config("just some words\n")

    def test_load_config(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text(CONFIG_TEXT)
        assert load_config(path) == parse_config(CONFIG_TEXT)

    def test_validation_happens_on_parse(self):
        with pytest.raises(ValueError):
            parse_config("method = smoke_signals\n")
        with pytest.raises(ValueError):
            parse_config("rounds = 0\n")


class TestSimulationConfigValidation:
    def test_rejects_bad_m_initial(self):
        with pytest.raises(ValueError):
            SimulationConfig(m_initial=0.0)

    def test_rejects_bad_width_for_twobit(self):
        with pytest.raises(ValueError):
            SimulationConfig(method="twobit", p=3)

    def test_rejects_negative_noise(self):
        with pytest.raises(ValueError):
            SimulationConfig(noise_sigma=-0.1)
