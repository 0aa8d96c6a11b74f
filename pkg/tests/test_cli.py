import csv
import json

import numpy as np
import pytest

from ssdr.cli import main, resolve_threads
from ssdr.datamodel import LabeledDataset, write_csv


def run_cli(*argv):
    return main([str(a) for a in argv])


def write_blob_csv(path, rng, n_per=40, p=3, spread=8.0):
    feats, labels = [], []
    for c in range(2):
        feats.append(rng.normal(size=(n_per, p)) + spread * c)
        labels.append(np.full(n_per, c))
    ds = LabeledDataset(np.vstack(feats), np.concatenate(labels))
    write_csv(ds, path)
    return ds


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


class TestSimulate:
    def test_smoke_and_outputs(self, tmp_path):
        code = run_cli("simulate", "--config-id", 1, "--n-policy", "2p",
                       "--replicates", 3, "--seed", 7,
                       "--out-dir", tmp_path, "--threads", 1)
        assert code == 0
        payload = load_json(tmp_path / "cfg1_report.json")
        assert payload["tool_version"]
        assert payload["resolved_config"]["seed"] == 7
        assert payload["metadata"]["master_seed"] == 7
        assert "created_at" in payload
        with open(tmp_path / "cfg1_summary.csv", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["method"] == "qda_full"
        assert rows[0]["n"] == "3"
        # the summary alone names its run, seed, and tool version
        assert rows[0]["seed"] == "7"
        assert rows[0]["tool_version"] == payload["tool_version"]

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = {
            "schema_version": 1,
            "config_id": 1,
            "n_policy": "2p",
            "replicates": 99,
            "seed": 5,
            "name": "demo",
            "pipelines": [
                {"name": "ssdr_sample", "estimator": "sample", "dims": [1, 10]},
            ],
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        code = run_cli("simulate", "--config", cfg_path, "--replicates", 2,
                       "--out-dir", tmp_path, "--threads", 1)
        assert code == 0
        payload = load_json(tmp_path / "demo_report.json")
        assert payload["metadata"]["replicates"] == 2  # flag wins
        methods = {c["method"] for c in payload["cells"]}
        assert methods == {"qda_full", "ssdr_sample"}

    def test_repeat_invocation_identical_except_timestamp(self, tmp_path):
        for sub in ("a", "b"):
            (tmp_path / sub).mkdir()
            code = run_cli("simulate", "--config-id", 1, "--n-policy", "2p",
                           "--replicates", 3, "--seed", 11,
                           "--out-dir", tmp_path / sub, "--threads", 1)
            assert code == 0
        a = load_json(tmp_path / "a" / "cfg1_report.json")
        b = load_json(tmp_path / "b" / "cfg1_report.json")
        a.pop("created_at")
        b.pop("created_at")
        assert a == b

    def test_unknown_config_id_is_usage_error(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"config_id": 5, "seed": 1}))
        code = run_cli("simulate", "--config", cfg_path, "--out-dir", tmp_path)
        assert code == 1
        assert "config_id" in capsys.readouterr().err

    def test_partial_estimator_failure_exit_code(self, tmp_path):
        cfg = {
            "config_id": 1,
            "n_policy": "p+1",
            "seed": 3,
            "pipelines": [{"name": "ssdr_haff", "estimator": "haff",
                           "dims": [1]}],
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        code = run_cli("simulate", "--config", cfg_path, "--replicates", 2,
                       "--out-dir", tmp_path, "--threads", 1)
        assert code == 2  # haff cannot fit at n_i = p + 1

    def test_missing_config_id_is_usage_error(self, tmp_path, capsys):
        code = run_cli("simulate", "--out-dir", tmp_path, "--seed", 1)
        assert code == 1

    def test_auto_seed_echoed(self, tmp_path, capsys):
        code = run_cli("simulate", "--config-id", 1, "--n-policy", "2p",
                       "--replicates", 2, "--out-dir", tmp_path,
                       "--threads", 1)
        assert code == 0
        out = capsys.readouterr().out
        assert "master seed" in out


class TestCv:
    def test_smoke_table_and_invariance(self, tmp_path):
        rng = np.random.default_rng(0)
        data = tmp_path / "blobs.csv"
        write_blob_csv(data, rng)
        code = run_cli("cv", "--data", data, "--estimator", "sample",
                       "--folds", 5, "--repeats", 2, "--seed", 9,
                       "--out-dir", tmp_path, "--threads", 1)
        assert code == 0
        payload = load_json(tmp_path / "blobs_report.json")
        cells = {(c["method"], c["r"]): c["rates"] for c in payload["cells"]}
        # full-dimension projection reproduces full-feature QDA exactly
        np.testing.assert_allclose(cells[("ssdr_sample_inverse", 3)],
                                   cells[("qda_full", None)], atol=1e-10)
        with open(tmp_path / "blobs_table.csv", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["method"] == "qda_full"
        assert rows[1]["r_star"] != ""

    def test_stratification_error_is_fatal(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        feats = np.vstack([rng.normal(size=(30, 2)), rng.normal(size=(4, 2))])
        ds = LabeledDataset(feats, [0] * 30 + [1] * 4)
        data = tmp_path / "small.csv"
        write_csv(ds, data)
        code = run_cli("cv", "--data", data, "--folds", 10, "--repeats", 1,
                       "--seed", 1, "--out-dir", tmp_path)
        assert code == 1
        assert "fewer than" in capsys.readouterr().err

    def test_missing_data_file_is_fatal(self, tmp_path, capsys):
        code = run_cli("cv", "--data", tmp_path / "missing.csv",
                       "--out-dir", tmp_path, "--seed", 1)
        assert code == 1
        assert "missing.csv" in capsys.readouterr().err

    def test_cv_deterministic(self, tmp_path):
        rng = np.random.default_rng(2)
        data = tmp_path / "blobs.csv"
        write_blob_csv(data, rng)
        reports = []
        for sub in ("x", "y"):
            (tmp_path / sub).mkdir()
            code = run_cli("cv", "--data", data, "--estimator", "sample",
                           "--folds", 5, "--repeats", 2, "--seed", 21,
                           "--r", "1,2", "--out-dir", tmp_path / sub,
                           "--threads", 1)
            assert code == 0
            payload = load_json(tmp_path / sub / "blobs_report.json")
            payload.pop("created_at")
            reports.append(payload)
        assert reports[0] == reports[1]


class TestSelectDimAndReport:
    @pytest.fixture()
    def report_path(self, tmp_path):
        rng = np.random.default_rng(3)
        data = tmp_path / "blobs.csv"
        write_blob_csv(data, rng)
        code = run_cli("cv", "--data", data, "--estimator", "sample",
                       "--folds", 5, "--repeats", 2, "--seed", 4,
                       "--out-dir", tmp_path, "--threads", 1)
        assert code == 0
        return tmp_path / "blobs_report.json"

    def test_select_dim_prints_r_star(self, report_path, capsys):
        code = run_cli("select-dim", "--report", report_path)
        assert code == 0
        out = capsys.readouterr().out
        assert "ssdr_sample_inverse" in out
        assert "r_star=" in out

    def test_select_dim_missing_file(self, tmp_path, capsys):
        code = run_cli("select-dim", "--report", tmp_path / "nope.json")
        assert code == 1
        assert "not found" in capsys.readouterr().err

    def test_select_dim_without_sweeps(self, tmp_path, capsys):
        code = run_cli("simulate", "--config-id", 1, "--n-policy", "2p",
                       "--replicates", 2, "--seed", 1,
                       "--out-dir", tmp_path, "--threads", 1)
        assert code == 0
        code = run_cli("select-dim", "--report",
                       tmp_path / "cfg1_report.json")
        assert code == 1
        assert "no dimension sweeps" in capsys.readouterr().err

    def test_report_merges_sorted(self, report_path, tmp_path):
        out = tmp_path / "merged.csv"
        code = run_cli("report", report_path, report_path, "--out", out)
        assert code == 0
        with open(out, encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        datasets = [r["dataset"] for r in rows]
        assert datasets == sorted(datasets)
        assert any(r["method"] == "qda_full" for r in rows)

    def test_report_schema_mismatch(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"schema_version": 999, "cells": []}))
        code = run_cli("report", bad, "--out", tmp_path / "m.csv")
        assert code == 1
        assert "schema" in capsys.readouterr().err.lower()


class TestThreads:
    def test_flag_wins(self):
        assert resolve_threads(3) == 3

    def test_env_variable(self, monkeypatch):
        monkeypatch.setenv("SSDR_THREADS", "5")
        assert resolve_threads(None) == 5

    def test_bad_env_rejected(self, monkeypatch):
        monkeypatch.setenv("SSDR_THREADS", "lots")
        from ssdr.cli import UsageError
        with pytest.raises(UsageError):
            resolve_threads(None)

    def test_default_positive(self, monkeypatch):
        monkeypatch.delenv("SSDR_THREADS", raising=False)
        assert resolve_threads(None) >= 1
