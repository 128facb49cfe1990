"""Experiment configs, pipelines, determinism, and the CLI verbs."""

import json

import pytest

from brinklab.cli import main as cli_main
from brinklab.errors import ValidationError
from brinklab.experiments import load_config, run_experiment, validate_config


def write_toml(tmp_path, text, name="config.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


W2_SMALL = """
kind = "w2-rates"
seed = 11
output = "{out}"

[params]
n_list = [32, 64, 128]
replicates = 4
"""

EVENTS_SMALL = """
kind = "events"
seed = 5
output = "{out}"

[params]
event = "A"
n_list = [64, 128]
trials = 40
alpha = 2.5
L = 1.0
"""


class TestValidation:
    def test_unknown_kind(self):
        with pytest.raises(ValidationError) as exc:
            validate_config({"kind": "nope", "seed": 1})
        assert "kind" in str(exc.value)

    def test_trials_floor_named(self):
        with pytest.raises(ValidationError) as exc:
            validate_config({"kind": "events", "seed": 1,
                             "params": {"n_list": [10], "trials": 0}})
        assert "trials" in str(exc.value) and "30" in str(exc.value)

    def test_n_list_must_increase(self):
        with pytest.raises(ValidationError) as exc:
            validate_config({"kind": "w2-rates", "seed": 1,
                             "params": {"n_list": [128, 64], "replicates": 4}})
        assert "n_list" in str(exc.value)

    def test_hash_changes_with_any_field(self):
        base = validate_config({"kind": "w2-rates", "seed": 1,
                                "params": {"n_list": [32, 64], "replicates": 4}})
        other = validate_config({"kind": "w2-rates", "seed": 2,
                                 "params": {"n_list": [32, 64], "replicates": 4}})
        third = validate_config({"kind": "w2-rates", "seed": 1,
                                 "params": {"n_list": [32, 64], "replicates": 5}})
        assert base.config_hash() != other.config_hash()
        assert base.config_hash() != third.config_hash()

    def test_config_round_trip(self, tmp_path):
        path = write_toml(tmp_path, W2_SMALL.format(out=tmp_path / "r"))
        cfg = load_config(path)
        assert cfg.kind == "w2-rates"
        assert cfg.params["n_list"] == [32, 64, 128]


class TestDeterminism:
    @pytest.mark.parametrize("toml,kind", [(W2_SMALL, "w2"), (EVENTS_SMALL, "ev")])
    def test_byte_identical_across_thread_counts(self, tmp_path, toml, kind):
        cfg = load_config(write_toml(tmp_path, toml.format(out=tmp_path / kind)))
        rep1 = run_experiment(cfg, threads=1)
        rep8 = run_experiment(cfg, threads=8)
        assert rep1.to_tsv() == rep8.to_tsv()
        assert rep1.to_json() == rep8.to_json()

    def test_all_kinds_deterministic(self, tmp_path):
        configs = [
            {"kind": "eta-moments", "seed": 3,
             "params": {"n_list": [64, 128], "trials": 60, "kappa_list": [-1.0, 1.0]}},
            {"kind": "hneg1", "seed": 4, "params": {"pairs": 2, "resolution": 32}},
            {"kind": "corrector", "seed": 5,
             "params": {"eps_list": [0.0625, 0.03125, 0.015625], "alpha": 2.5,
                        "quantities": ["grad"]}},
            {"kind": "brinkman-gap", "seed": 6,
             "params": {"n_list": [64, 128], "lambda": 0.3}},
        ]
        for raw in configs:
            cfg = validate_config(raw)
            a = run_experiment(cfg, threads=1)
            b = run_experiment(cfg, threads=8)
            assert a.to_tsv() == b.to_tsv(), raw["kind"]


class TestPipelines:
    def test_w2_rates_report_shape(self, tmp_path):
        cfg = load_config(write_toml(tmp_path, W2_SMALL.format(out=tmp_path / "w2")))
        rep = run_experiment(cfg)
        assert rep.columns[0] == "N"
        assert len(rep.rows) == 3
        assert rep.fit is not None

    def test_events_bound_violation_detected(self, tmp_path):
        # alpha = 2.5 with the quoted bound: measured frequency falls short,
        # so the bound flag must come back False (see decisions ledger)
        cfg = validate_config({"kind": "events", "seed": 9,
                               "params": {"event": "A", "n_list": [1000],
                                          "trials": 200, "alpha": 2.5, "L": 1.0}})
        rep = run_experiment(cfg)
        assert not rep.bound_ok

    def test_report_files_written(self, tmp_path):
        out = tmp_path / "files"
        cfg = load_config(write_toml(tmp_path, W2_SMALL.format(out=out)))
        rep = run_experiment(cfg)
        rep.write(str(out))
        tsv = (tmp_path / "files.tsv").read_text()
        doc = json.loads((tmp_path / "files.json").read_text())
        assert tsv.startswith("# brinklab-report kind=w2-rates")
        assert doc["provenance"]["config_hash"] == cfg.config_hash()
        assert len(doc["rows"]) == 3


class TestCli:
    def test_validate_ok(self, tmp_path, capsys):
        path = write_toml(tmp_path, W2_SMALL.format(out=tmp_path / "x"))
        assert cli_main(["validate", path]) == 0

    def test_validate_error_exit_2(self, tmp_path, capsys):
        path = write_toml(tmp_path, "kind = \"events\"\nseed = 1\n[params]\nn_list = [10]\ntrials = 3\n")
        assert cli_main(["validate", path]) == 2
        assert "trials" in capsys.readouterr().err

    def test_missing_file_exit_2(self):
        assert cli_main(["validate", "/nonexistent/x.toml"]) == 2

    def test_run_writes_and_exits_zero(self, tmp_path, capsys):
        path = write_toml(tmp_path, W2_SMALL.format(out=tmp_path / "run"))
        assert cli_main(["run", path]) == 0
        assert (tmp_path / "run.tsv").exists()
        assert (tmp_path / "run.json").exists()

    def test_strict_bound_violation_exit_3(self, tmp_path):
        toml = """
kind = "events"
seed = 9
output = "{out}"

[params]
event = "A"
n_list = [1000]
trials = 100
alpha = 2.5
L = 1.0
"""
        path = write_toml(tmp_path, toml.format(out=tmp_path / "strict"))
        assert cli_main(["run", path, "--strict"]) == 3
        assert cli_main(["run", path]) == 0

    def test_report_refit(self, tmp_path, capsys):
        path = write_toml(tmp_path, W2_SMALL.format(out=tmp_path / "refit"))
        assert cli_main(["run", path]) == 0
        assert cli_main(["report", str(tmp_path / "refit.tsv")]) == 0
        out = capsys.readouterr().out
        assert "slope=" in out

    def test_oracle_battery(self, tmp_path, capsys):
        path = write_toml(tmp_path, W2_SMALL.format(out=tmp_path / "orc"))
        assert cli_main(["oracle", path]) == 0
        out = capsys.readouterr().out
        assert "OK" in out and "FAIL" not in out
