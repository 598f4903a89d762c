"""Experiment harness: config handling, metrics files, traffic accounting,
determinism, the capacity table, and the CLI entry point."""

import csv
import io
import json

import numpy as np
import pytest

from bitfed.cli import main, run_selftest
from bitfed.errors import ConfigError
from bitfed.harness import (
    CSV_COLUMNS,
    TIMING_COLUMNS,
    CapacityRow,
    ExperimentConfig,
    capacity_table,
    format_capacity_table,
    model_digest,
    predict_traffic,
    run_experiment,
)
from bitfed.protocol import ALL_STAGES

FAST = dict(rounds=3, clients=4, sample=2, features=4, shard_size=64, eval_size=200, seed=3)


def fast_config(**overrides):
    return ExperimentConfig().with_overrides({**FAST, **overrides})


@pytest.fixture(scope="module")
def fast_result():
    return run_experiment(fast_config())


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert (cfg.n, cfg.limbs, cfg.t) == (4096, 2, 2281701377)
        assert (cfg.beta, cfg.delta, cfg.clients, cfg.sample) == (8, 3, 10, 5)

    def test_from_file_and_overrides(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"rounds": 7, "beta": 6, "layer_sizes": [100]}))
        cfg = ExperimentConfig.from_file(path)
        assert cfg.rounds == 7 and cfg.beta == 6
        assert cfg.layer_sizes == (100,)
        cfg2 = cfg.with_overrides({"rounds": 9, "beta": None})
        assert cfg2.rounds == 9 and cfg2.beta == 6  # None means "not given"

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            ExperimentConfig().with_overrides({"betta": 8})

    def test_unreadable_config_file_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read config file"):
            ExperimentConfig.from_file(tmp_path / "missing.json")

    def test_malformed_config_file_is_config_error(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            ExperimentConfig.from_file(path)
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="JSON object"):
            ExperimentConfig.from_file(path)

    def test_logistic_layer_sizes_forced(self):
        cfg = ExperimentConfig(features=16)
        assert cfg.model_layer_sizes() == (17,)
        bad = ExperimentConfig(features=16, layer_sizes=(100,))
        with pytest.raises(ConfigError, match="features \\+ bias"):
            bad.model_layer_sizes()

    def test_identity_uses_layer_sizes(self):
        cfg = ExperimentConfig(trainer="identity", layer_sizes=(61706,))
        assert cfg.model_layer_sizes() == (61706,)

    def test_validate_rejects_bad_shapes(self):
        with pytest.raises(ConfigError, match="transport"):
            ExperimentConfig(transport="carrier-pigeon").validate()
        with pytest.raises(ConfigError, match="sample"):
            ExperimentConfig(sample=11, clients=10).validate()
        with pytest.raises(ConfigError, match="rounds"):
            ExperimentConfig(rounds=-1).validate()
        with pytest.raises(ConfigError, match="not prime"):
            ExperimentConfig(t=2281701376).validate()

    def test_validate_rejects_unsound_layout(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(beta=8, delta=2, sample=5).validate()

    def test_validate_returns_context_and_schema(self):
        ctx, schema = ExperimentConfig().validate()
        assert ctx.n == 4096 and ctx.t == 2281701377
        assert schema.total_polys == 1  # 17 weights fit one poly easily

    def test_custom_ring_parameters(self):
        cfg = ExperimentConfig(n=64, limbs=1, limb_bits=20, t=257,
                               beta=2, delta=3, clients=2, sample=2)
        ctx, schema = cfg.validate()
        assert ctx.n == 64 and ctx.nlimb == 1
        assert ctx.limbs[0].value > 2**20 and (ctx.limbs[0].value - 1) % 128 == 0


class TestRunExperiment:
    def test_summary_shape(self, fast_result):
        s = fast_result.summary
        assert s["rounds_run"] == 3
        assert s["backend"] in ("compiled", "pure")
        assert 0.0 <= s["final_accuracy"] <= 1.0
        assert s["final_loss"] > 0
        assert set(s["stage_percent_mean"]) == set(ALL_STAGES)

    def test_metrics_rows(self, fast_result):
        rows = list(csv.DictReader(io.StringIO(fast_result.csv_text())))
        assert len(rows) == 3
        assert list(rows[0]) == list(CSV_COLUMNS)
        assert [r["round"] for r in rows] == ["1", "2", "3"]
        for r in rows:
            for col in TIMING_COLUMNS:
                assert float(r[col]) >= 0.0

    def test_stage_percentages_sum_to_100(self, fast_result):
        rows = list(csv.DictReader(io.StringIO(fast_result.csv_text())))
        for r in rows:
            total = sum(float(r[c]) for c in TIMING_COLUMNS)
            pct = sum(100.0 * float(r[c]) / total for c in TIMING_COLUMNS)
            assert pct == pytest.approx(100.0, abs=0.1)
        mean = fast_result.summary["stage_percent_mean"]
        assert sum(mean.values()) == pytest.approx(100.0, abs=0.1)

    def test_traffic_exactly_matches_prediction(self, fast_result):
        tr = fast_result.summary["traffic"]
        assert tr["exact_match"] is True
        assert tr["csv_upload_total"] == 3 * tr["predicted_upload_per_round"]
        assert tr["csv_download_total"] == 3 * tr["predicted_download_per_round"]

    def test_loss_decreases_over_training(self):
        result = run_experiment(fast_config(rounds=8, seed=5))
        losses = [r.loss for r in result.records]
        assert losses[-1] < losses[0]
        assert result.records[-1].accuracy > 0.9

    def test_encrypted_equals_plaintext_control_per_round(self):
        enc = run_experiment(fast_config())
        ctl = run_experiment(fast_config(plaintext_control=True))
        assert enc.round_digests == ctl.round_digests
        assert model_digest(enc.final_model) == model_digest(ctl.final_model)
        # control carries no wire traffic
        assert all(r.upload_bytes == 0 for r in ctl.records)

    def test_same_seed_reproduces_everything_but_wall_clock(self):
        a = run_experiment(fast_config())
        b = run_experiment(fast_config())
        assert a.round_digests == b.round_digests
        ra = list(csv.DictReader(io.StringIO(a.csv_text())))
        rb = list(csv.DictReader(io.StringIO(b.csv_text())))
        stable = [c for c in CSV_COLUMNS if c not in TIMING_COLUMNS]
        for x, y in zip(ra, rb):
            for col in stable:
                assert x[col] == y[col], col

    def test_different_seed_differs(self):
        a = run_experiment(fast_config(seed=3))
        b = run_experiment(fast_config(seed=4))
        assert a.round_digests != b.round_digests

    def test_zero_rounds(self, tmp_path):
        result = run_experiment(fast_config(rounds=0, out=str(tmp_path / "o")))
        assert result.records == []
        assert result.summary["rounds_run"] == 0
        text = (tmp_path / "o" / "metrics.csv").read_text()
        assert text.strip() == ",".join(CSV_COLUMNS)

    def test_output_files(self, tmp_path):
        out = tmp_path / "exp"
        result = run_experiment(fast_config(out=str(out)))
        assert (out / "metrics.csv").read_text() == result.csv_text()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["rounds_run"] == 3
        loaded = np.load(out / "final_model.npz")
        assert np.array_equal(loaded["layer0"], result.final_model[0])

    def test_identity_trainer_run(self):
        result = run_experiment(
            fast_config(trainer="identity", layer_sizes=(50,), rounds=2)
        )
        assert result.summary["rounds_run"] == 2
        assert np.isnan(result.summary["final_loss"])
        # identity + exact aggregation: model frozen after the first projection
        assert result.round_digests[0] == result.round_digests[1]

    def test_socket_transport_matches_mem(self):
        mem = run_experiment(fast_config(rounds=2))
        sock = run_experiment(fast_config(rounds=2, transport="socket"))
        assert mem.round_digests == sock.round_digests
        for a, b in zip(mem.records, sock.records):
            assert a.upload_bytes == b.upload_bytes
            assert a.download_bytes == b.download_bytes


class TestPredictTraffic:
    def test_reference_layer_betas(self):
        # 61706-weight layer: beta=6 packs 3 slots (6 polys), beta=12 packs 2
        # (8 polys); fewer bits per weight wins on bytes
        sizes = {}
        for beta in (6, 8, 12):
            cfg = ExperimentConfig(trainer="identity", layer_sizes=(61706,), beta=beta)
            ctx, schema = cfg.validate()
            up, down = predict_traffic(schema, ctx)
            sizes[beta] = (schema.total_polys, up, down)
        assert sizes[6][0] == 6 and sizes[12][0] == 8
        assert sizes[6][1] == 786493 and sizes[12][1] == 1048641
        assert sizes[6][1] < sizes[12][1]
        assert sizes[8] == sizes[12]  # both have m=2 at delta=3, U=5


class TestCapacityTable:
    def test_rows_for_reference_betas(self):
        rows = capacity_table(2281701377, 5, [6, 8, 12], 3)
        by_beta = {r.beta: r for r in rows}
        assert by_beta[6].slots == 3 and by_beta[6].polys == 6
        assert by_beta[8].slots == 2 and by_beta[8].polys == 8
        assert by_beta[12].slots == 2 and by_beta[12].polys == 8
        for r in rows:
            assert r.feasible
            assert r.carry_slack > 0 and r.modulus_slack > 0
            assert r.bytes_per_weight == pytest.approx(r.upload_bytes / 61706)

    def test_infeasible_beta_flagged(self):
        rows = capacity_table(2281701377, 5, [29], 3)
        assert len(rows) == 1 and not rows[0].feasible
        assert rows[0].note != ""

    def test_formatting_includes_all_rows(self):
        rows = capacity_table(2281701377, 5, [6, 29], 3)
        text = format_capacity_table(rows, 2281701377, 5, 3, 61706)
        assert "infeasible" in text
        assert text.count("\n") >= 3


class TestCli:
    def test_run_subcommand(self, tmp_path, capsys):
        rc = main([
            "run", "--rounds", "2", "--seed", "9", "--clients", "4", "--sample", "2",
            "--features", "4", "--out", str(tmp_path / "cli"),
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "rounds: 2" in out
        assert "measured match: True" in out
        assert (tmp_path / "cli" / "metrics.csv").exists()

    def test_config_file_flag(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({**FAST, "rounds": 1}))
        assert main(["run", "--config", str(cfg)]) == 0
        assert "rounds: 1" in capsys.readouterr().out

    def test_cli_overrides_file(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({**FAST, "rounds": 1}))
        assert main(["run", "--config", str(cfg), "--rounds", "2"]) == 0
        assert "rounds: 2" in capsys.readouterr().out

    def test_capacity_subcommand(self, capsys):
        assert main(["capacity", "--betas", "6,8,12"]) == 0
        out = capsys.readouterr().out
        assert "beta" in out and " 6 " in out

    def test_predict_traffic_subcommand(self, capsys):
        rc = main(["predict-traffic", "--beta", "12", "--weights", "61706"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "polynomials per update: 8" in out
        assert "1048641" in out

    def test_config_error_exit_code(self, capsys):
        rc = main(["run", "--rounds", "1", "--sample", "20"])
        assert rc == 2
        assert "config error" in capsys.readouterr().err

    def test_unknown_config_key_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"no_such_key": 1}))
        assert main(["run", "--config", str(cfg)]) == 2

    def test_selftest_passes(self):
        lines = []
        assert run_selftest(print_fn=lines.append)
        assert lines[-1] == "selftest passed"
        assert sum(1 for l in lines if l.startswith("ok: ")) == 6
