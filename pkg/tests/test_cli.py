"""CLI layer: summary payloads, sweep tables, artifact determinism, exit codes."""
import csv
import json

import pytest

from resplit.cli import main, run_single, run_sweep, write_summary, write_sweep_csv
from resplit.config import ConfigError, config_from_dict, point_seed

# A stressed, short-horizon operating point so every engine finishes in
# milliseconds.  40 steps per path, failures common.
CHEAP_MODEL = {
    "horizon_seconds": 2.0,
    "grace_seconds": 0.25,
    "delay_threshold": 0.02,
    "stress_log_sd": 1.0,
    "stress_log_mean": -3.0,
}
CHEAP_SMC = {
    "success_target": 4,
    "attempt_target": 6,
    "initial_pool": 4,
    "pool_min": 4,
    "pool_max": 40,
    "budget_steps": 20_000,
}


def cheap_dict(**extra):
    raw = {"model": dict(CHEAP_MODEL), "smc": dict(CHEAP_SMC),
           "mc": {"budget_steps": 20_000}}
    raw.update(extra)
    return raw


class TestRunSingle:
    def test_smc_payload_shape(self):
        cfg = config_from_dict(cheap_dict(master_seed=11, replications=2))
        payload = run_single(cfg)
        assert payload["schema"] == "resplit-summary/1"
        assert payload["engine"] == "smc"
        assert payload["master_seed"] == 11
        assert payload["config"]["smc"]["success_target"] == 4
        assert "output_dir" not in payload["config"]
        assert len(payload["replications"]) == 2
        rep0 = payload["replications"][0]
        assert rep0["replication"] == 0
        result = rep0["result"]
        assert set(result) == {
            "estimate", "resolution_floor", "cost_steps_used",
            "budget_exhausted", "extinction_level", "levels", "diagnostics",
        }
        assert len(result["levels"]) == 4
        assert result["levels"][0]["target_threshold"] == 0.1
        agg = payload["aggregate"]
        assert agg["mean_estimate"] == pytest.approx(
            sum(r["result"]["estimate"] for r in payload["replications"]) / 2
        )
        assert 0.0 <= agg["positive_fraction"] <= 1.0

    def test_mc_payload_shape(self):
        cfg = config_from_dict(cheap_dict(engine="mc"))
        result = run_single(cfg)["replications"][0]["result"]
        assert set(result) == {
            "estimate", "trajectories", "hits", "cost_steps_used",
            "min_resolvable", "rel_var_pred",
        }
        assert result["trajectories"] == 500  # 20k steps / 40-step horizon

    def test_policy_payload_extends_smc(self):
        cfg = config_from_dict(
            cheap_dict(engine="smc+policy",
                       lookahead={"host_level": 2, "continuations": 5})
        )
        result = run_single(cfg)["replications"][0]["result"]
        for key in ("selections", "selection_counts", "selection_frequencies",
                    "fallback_count", "degenerate_count", "inner_cost_steps",
                    "inner_budget_exhausted", "host_level", "levels"):
            assert key in result
        assert result["host_level"] == 2
        assert len(result["selection_counts"]) == 5
        assert len(result["selections"]) == result["levels"][1]["successes"]

    def test_replication_seeds_are_derived_not_sequential(self):
        cfg = config_from_dict(cheap_dict(replications=2))
        payload = run_single(cfg)
        seeds = [r["seed"] for r in payload["replications"]]
        assert seeds[0] != seeds[1]
        assert seeds != [0, 1]


class TestWriteSummary:
    def test_repeat_runs_byte_identical(self, tmp_path):
        cfg = config_from_dict(cheap_dict(master_seed=3))
        a = write_summary(run_single(cfg), tmp_path / "a")
        b = write_summary(run_single(cfg), tmp_path / "b")
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_bytes(self, tmp_path):
        base = cheap_dict()
        a = write_summary(run_single(config_from_dict({**base, "master_seed": 1})),
                          tmp_path / "a")
        b = write_summary(run_single(config_from_dict({**base, "master_seed": 2})),
                          tmp_path / "b")
        assert a.read_bytes() != b.read_bytes()

    def test_valid_sorted_json(self, tmp_path):
        cfg = config_from_dict(cheap_dict())
        path = write_summary(run_single(cfg), tmp_path)
        payload = json.loads(path.read_text())
        assert list(payload) == sorted(payload)


def sweep_cfg(**extra):
    return config_from_dict(
        cheap_dict(
            sweep={"axes": [
                {"name": "engine", "values": ["mc", "smc"]},
                {"name": "model.delay_threshold", "values": [0.02, 0.05]},
            ]},
            **extra,
        )
    )


class TestRunSweep:
    def test_grid_shape_and_axis_columns(self):
        cfg = sweep_cfg(master_seed=7)
        header, rows = run_sweep(cfg)
        assert header[:2] == ["axis:engine", "axis:model.delay_threshold"]
        assert len(header) == len(set(header))  # engine axis must not collide
        assert len(rows) == 4
        assert all(len(r) == len(header) for r in rows)
        combos = [(r[0], r[1]) for r in rows]
        assert combos == [("mc", "0.02"), ("mc", "0.05"),
                          ("smc", "0.02"), ("smc", "0.05")]

    def test_engine_specific_cells(self):
        header, rows = run_sweep(sweep_cfg())
        col = {name: i for i, name in enumerate(header)}
        for row in rows:
            if row[col["axis:engine"]] == "mc":
                assert row[col["engine"]] == "mc"
                assert row[col["budget_exhausted"]] == ""
                assert row[col["trajectories"]] == "500"
                assert row[col["p_hat_0"]] == ""
            else:
                assert row[col["engine"]] == "smc"
                assert row[col["budget_exhausted"]] in ("true", "false")
                assert row[col["trajectories"]] == ""
                assert row[col["p_hat_0"]] != ""

    def test_seeds_match_point_seed(self):
        cfg = sweep_cfg(master_seed=9, replications=2)
        header, rows = run_sweep(cfg)
        col = {name: i for i, name in enumerate(header)}
        for row in rows:
            coords = {"engine": row[col["axis:engine"]],
                      "model.delay_threshold": float(row[col["axis:model.delay_threshold"]])}
            rep = int(row[col["replication"]])
            assert int(row[col["seed"]]) == point_seed(9, coords, rep)

    def test_policy_columns_padded_to_widest_set(self):
        cfg = config_from_dict(
            cheap_dict(
                engine="smc+policy",
                lookahead={"host_level": 2, "continuations": 5},
                sweep={"axes": [{"name": "policy.size", "values": [1, 3]}]},
            )
        )
        header, rows = run_sweep(cfg)
        col = {name: i for i, name in enumerate(header)}
        assert "select_freq_2" in col and "select_freq_3" not in col
        small, large = rows
        assert small[col["host_level"]] == "2"
        assert small[col["select_freq_0"]] == "1.0"  # singleton always picks 0
        assert small[col["select_freq_1"]] == ""
        assert large[col["select_freq_2"]] != ""
        assert small[col["inner_cost_steps"]] == "0"

    def test_levels_cannot_be_swept(self):
        cfg = config_from_dict(
            cheap_dict(sweep={"axes": [
                {"name": "levels.thresholds", "values": [[0.0, 1.0]]}
            ]})
        )
        with pytest.raises(ConfigError, match="levels cannot be swept"):
            run_sweep(cfg)

    def test_workers_do_not_change_rows(self):
        cfg = sweep_cfg(master_seed=5)
        header1, rows1 = run_sweep(cfg, workers=1)
        header2, rows2 = run_sweep(cfg, workers=2)
        assert header1 == header2
        assert rows1 == rows2


class TestWriteSweepCsv:
    def test_parses_back_and_repeats_identically(self, tmp_path):
        cfg = sweep_cfg(master_seed=2)
        header, rows = run_sweep(cfg)
        a = write_sweep_csv(header, rows, tmp_path / "a")
        b = write_sweep_csv(header, rows, tmp_path / "b")
        assert a.read_bytes() == b.read_bytes()
        assert b"\r\n" in a.read_bytes()
        with open(a, newline="", encoding="utf-8") as fh:
            parsed = list(csv.reader(fh))
        assert parsed[0] == header
        assert parsed[1:] == rows


class TestMain:
    def test_run_writes_summary(self, tmp_path, capsys):
        cfg_path = tmp_path / "exp.json"
        cfg_path.write_text(json.dumps(cheap_dict()))
        out = tmp_path / "results"
        rc = main(["run", "--config", str(cfg_path), "--out", str(out)])
        assert rc == 0
        assert (out / "summary.json").exists()
        assert str(out / "summary.json") in capsys.readouterr().out

    def test_seed_flag_overrides_master(self, tmp_path):
        cfg_path = tmp_path / "exp.json"
        cfg_path.write_text(json.dumps(cheap_dict(master_seed=1)))
        main(["run", "--config", str(cfg_path), "--seed", "42",
              "--out", str(tmp_path / "a")])
        main(["run", "--config", str(cfg_path), "--seed", "42",
              "--out", str(tmp_path / "b")])
        a = (tmp_path / "a" / "summary.json").read_bytes()
        b = (tmp_path / "b" / "summary.json").read_bytes()
        assert a == b
        assert json.loads(a)["master_seed"] == 42

    def test_sweep_writes_csv(self, tmp_path):
        cfg_path = tmp_path / "exp.json"
        cfg_path.write_text(json.dumps(
            cheap_dict(sweep={"axes": [
                {"name": "model.delay_threshold", "values": [0.02, 0.05]}
            ]})
        ))
        out = tmp_path / "results"
        rc = main(["sweep", "--config", str(cfg_path), "--out", str(out)])
        assert rc == 0
        with open(out / "sweep.csv", newline="", encoding="utf-8") as fh:
            parsed = list(csv.reader(fh))
        assert len(parsed) == 3  # header + 2 points

    def test_bad_config_exits_2(self, tmp_path, capsys):
        cfg_path = tmp_path / "exp.json"
        cfg_path.write_text("{broken")
        rc = main(["run", "--config", str(cfg_path)])
        assert rc == 2
        assert "config error" in capsys.readouterr().err

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        cfg_path = tmp_path / "exp.json"
        cfg_path.write_text(json.dumps({"modle": {}}))
        rc = main(["run", "--config", str(cfg_path)])
        assert rc == 2
        assert "modle" in capsys.readouterr().err
