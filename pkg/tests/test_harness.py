import math

import numpy as np
import pytest

from marginal_screening.harness import (
    CSV_HEADER, Custom, Example1, Example2, ExperimentConfig, Fixed, Linear,
    ReplicationError, Square, oracle_failure_probability, parse_p_rule, read_sidecar,
    run_experiment, run_replication, sidecar_path, stream_id,
)
from marginal_screening.model import CovarianceStructure, RegressionModel, example1_model
from marginal_screening.screening import RetentionRule


def within_joint_se(p1, r1, p2, r2, z=3.0):
    pooled = (p1 * r1 + p2 * r2) / (r1 + r2)
    se = math.sqrt(pooled * (1 - pooled) * (1 / r1 + 1 / r2))
    return abs(p1 - p2) <= z * se


class TestConfig:
    def test_example1_model(self):
        cfg = ExperimentConfig(Example1(), (50,))
        model = cfg.model_for(50)
        assert model.p == 100
        assert model.coefficients == pytest.approx({1: -0.8, 3: 12.8}, abs=1e-12)
        assert cfg.tracked == (1,)

    def test_example2_defaults(self):
        cfg = ExperimentConfig(Example2(), (100,), p_rule=Square())
        assert cfg.tracked == (1, 2, 3, 4)
        assert cfg.p_for(100) == 10_000
        assert cfg.model_for(25).covariance.rho == 0.1

    def test_p_rules(self):
        assert Linear(2).resolve(50) == 100
        assert Linear(1.5).resolve(10) == 15
        assert Square().resolve(7) == 49
        assert Fixed(33).resolve(1000) == 33
        for text in ("linear:2", "square", "fixed:500", "linear:0.5"):
            assert parse_p_rule(text).describe() == text
        for bad in ("linear", "cube", "fixed:0", "linear:-1", "square:2"):
            with pytest.raises(ValueError):
                parse_p_rule(bad)

    @pytest.mark.parametrize("kwargs", [dict(replications=0), dict(n_values=()),
                                        dict(n_values=(2,)), dict(n_values=(10, 10)),
                                        dict(master_seed=-1), dict(tracked_variables=(0,))])
    def test_invalid(self, kwargs):
        base = dict(model_spec=Example1(), n_values=(10,))
        base.update(kwargs)
        with pytest.raises(ValueError):
            ExperimentConfig(**base)

    def test_hash_depends_on_settings(self):
        a = ExperimentConfig(Example1(), (50,), master_seed=1)
        b = ExperimentConfig(Example1(), (50,), master_seed=2)
        c = ExperimentConfig(Example1(), (50,), master_seed=1)
        assert a.config_hash() != b.config_hash()
        assert a.config_hash() == c.config_hash()

    def test_custom_resized(self):
        model = RegressionModel({2: 1.0}, CovarianceStructure.ar1(0.5, 2))
        cfg = ExperimentConfig(Custom(model), (10,))
        assert cfg.model_for(10).p == 20
        assert cfg.tracked == (2,)


class TestReplication:
    def test_deterministic(self):
        cfg = ExperimentConfig(Example2(), (40,), replications=5)
        assert run_replication(cfg, 40, 3) == run_replication(cfg, 40, 3)

    def test_strong_signal_survives(self):
        model = RegressionModel({1: 10.0}, CovarianceStructure.identity(1), noise_sd=0.01)
        cfg = ExperimentConfig(Custom(model), (100,), replications=50)
        assert all(run_replication(cfg, 100, r)[1] for r in range(50))

    def test_rep_index_range(self):
        cfg = ExperimentConfig(Example1(), (20,), replications=3)
        with pytest.raises(ValueError):
            run_replication(cfg, 20, 3)

    def test_failure_carries_provenance(self):
        dense = CovarianceStructure.dense(np.eye(4))
        cfg = ExperimentConfig(Custom(RegressionModel({1: 1.0}, dense)), (10,), replications=2)
        with pytest.raises(ReplicationError, match="n=10, rep=1"):
            run_replication(cfg, 10, 1)

    def test_stream_ids(self):
        ids = {stream_id(n, r) for n in (50, 200, 500) for r in range(1000)}
        assert len(ids) == 3000
        assert all(0 <= i < 2**64 for i in ids)


class TestExperiment:
    def test_report_formulas(self):
        cfg = ExperimentConfig(Example2(), (30, 60), replications=40)
        report = run_experiment(cfg, workers=1)
        assert len(report.rows) == 8
        for row in report.rows:
            assert row.failure_proportion == row.failure_count / 40
            assert 0 <= row.failure_proportion <= 1
            prop = row.failure_proportion
            assert row.mc_se == math.sqrt(prop * (1 - prop) / 40)
        assert report.row(60, 3).p == 120

    def test_adding_n_keeps_streams(self):
        one = run_experiment(ExperimentConfig(Example1(), (40,), replications=30), workers=1)
        two = run_experiment(ExperimentConfig(Example1(), (20, 40), replications=30), workers=1)
        assert one.row(40, 1) == two.row(40, 1)

    def test_csv_and_sidecar(self, tmp_path):
        cfg = ExperimentConfig(Example1(), (20, 30), replications=10, master_seed=7)
        report = run_experiment(cfg, workers=1)
        path = tmp_path / "r.csv"
        report.write(path, extra={"invocation": "example1 --n 20,30"})
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        assert len(lines) == 3
        fields = lines[1].split(",")
        assert fields[0] == "example1" and fields[1] == "20" and fields[2] == "40"
        assert fields[-1] == "7"
        meta = read_sidecar(sidecar_path(path))
        assert meta["config_hash"] == cfg.config_hash()
        assert meta["generator"].startswith("philox")
        assert meta["version"]
        assert meta["invocation"] == "example1 --n 20,30"

    def test_warns_on_untracked_support(self):
        cfg = ExperimentConfig(Example1(), (20,), replications=2, tracked_variables=(2,))
        with pytest.warns(UserWarning, match="not in the model support"):
            run_experiment(cfg, workers=1)

    def test_two_workers_match(self):
        cfg = ExperimentConfig(Example2(), (30,), replications=20, master_seed=3)
        assert run_experiment(cfg, workers=1).to_csv() == run_experiment(cfg, workers=2).to_csv()

    def test_other_retention_rules(self):
        for rule in (RetentionRule.n_over_log_n(), RetentionRule.power(0.5), RetentionRule.fixed(3)):
            cfg = ExperimentConfig(Example1(), (50,), replications=10, retention=rule)
            report = run_experiment(cfg, workers=1)
            assert 0 <= report.proportion(50, 1) <= 1


class TestOracle:
    def test_agrees_with_fast_path_example1(self):
        n = 200
        model = example1_model(2 * n)
        oracle = oracle_failure_probability(model, n, n, trials=2000, tracked=(1,), seed=1)[1]
        cfg = ExperimentConfig(Example1(), (n,), replications=1000, master_seed=99)
        fast = run_experiment(cfg, workers=1).proportion(n, 1)
        assert within_joint_se(oracle, 2000, fast, 1000)

    def test_null_model_exchangeable(self):
        n, p = 20, 40
        model = RegressionModel({}, CovarianceStructure.identity(p))
        oracle = oracle_failure_probability(model, n, n, trials=2000, tracked=(1, 2), seed=2)
        expect = 1 - n / p
        se = math.sqrt(expect * (1 - expect) / 2000)
        for v in oracle.values():
            assert abs(v - expect) <= 3 * se
        cfg = ExperimentConfig(Custom(model), (n,), p_rule=Fixed(p), replications=2000,
                               tracked_variables=(1, 2))
        with pytest.warns(UserWarning):
            report = run_experiment(cfg, workers=1)
        for var in (1, 2):
            assert abs(report.proportion(n, var) - expect) <= 3 * se

    def test_noiseless_single_predictor(self):
        model = RegressionModel({1: 2.0}, CovarianceStructure.ar1(0.5, 30), noise_sd=0.0)
        assert oracle_failure_probability(model, 10, 1, trials=200)[1] == 0.0
        cfg = ExperimentConfig(Custom(model), (10,), p_rule=Fixed(30), replications=200,
                               retention=RetentionRule.fixed(1))
        assert run_experiment(cfg, workers=1).proportion(10, 1) == 0.0

    def test_size_limit(self):
        with pytest.raises(ValueError):
            oracle_failure_probability(example1_model(501), 10, 5, trials=1)
