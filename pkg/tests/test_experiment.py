import json
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from hotspot_sim.experiment import (
    METRIC_FILES,
    config_from_dict,
    config_hash,
    config_to_dict,
    load_config,
    run_experiment,
    run_sanity,
)
from hotspot_sim.predictors import MODEL_ORDER


def run_smoke(smoke_config_dict, out_dir, **overrides):
    data = dict(smoke_config_dict)
    data.update(overrides)
    config = config_from_dict(data)
    import dataclasses

    config = dataclasses.replace(config, out_dir=str(out_dir))
    return run_experiment(config)


class TestConfigRoundtrip:
    def test_dict_roundtrip_preserves_hash(self, smoke_config_dict):
        config = config_from_dict(smoke_config_dict)
        again = config_from_dict(config_to_dict(config))
        assert config_hash(config) == config_hash(again)

    def test_default_profile_loads(self):
        config = load_config("default")
        assert config.runs == 50
        assert config.k_hotspots == 50
        assert config.sim.domain.horizon == 2190.0
        assert config.sim.burn_in == 500.0
        assert config.sim.train_len == 1500.0
        assert config.sim.eval_len == 189
        assert config.sim.population_scale == pytest.approx(1.0 / 40.0)
        assert config.sim.time_factor == 12.0
        assert len(config.beta_grid) == 25
        assert config.beta_grid[0] == pytest.approx(0.02)
        assert config.beta_grid[-1] == pytest.approx(2.0)


class TestSmokeExperiment:
    @pytest.fixture(scope="class")
    def smoke_result(self, tmp_path_factory):
        from tests.conftest import SMOKE_CONFIG

        out = tmp_path_factory.mktemp("smoke-out")
        result = run_smoke(json.loads(json.dumps(SMOKE_CONFIG)), out)
        return result

    def test_all_six_csvs_written(self, smoke_result):
        for name in METRIC_FILES:
            path = smoke_result.out_dir / name
            assert path.exists(), name
            frame = pd.read_csv(path)
            assert len(frame.columns) >= 3
        assert (smoke_result.out_dir / "manifest.json").exists()

    def test_every_model_and_day_present(self, smoke_result):
        rc = smoke_result.relative_counts
        assert set(rc.model.unique()) == set(MODEL_ORDER)
        assert sorted(rc.day.unique()) == [340.0, 341.0]
        assert set(rc.district.unique()) == set(range(1, 20))

    def test_hotspot_conservation(self, smoke_result):
        rc = smoke_result.relative_counts
        per_day = rc.groupby(["model", "day"]).predicted_hotspots.sum()
        assert set(per_day.unique()) == {8}
        per_day_true = rc.groupby(["model", "day"]).true_hotspots.sum()
        assert set(per_day_true.unique()) == {8}

    def test_manifest_contents(self, smoke_result):
        m = smoke_result.manifest
        assert m["eval_window_days"] == [340, 341]
        assert m["heatmap_day_span"] == "evaluation"
        assert m["completed_runs"] == [0]
        assert m["failed_runs"] == []
        assert "calibrated_total_rate" in m

    def test_fit_reports_dumped(self, smoke_result):
        for stream in ("full", "reported"):
            path = smoke_result.out_dir / f"fit_report_run0_{stream}.csv"
            assert path.exists()
            frame = pd.read_csv(path)
            assert list(frame.columns) == [
                "iteration", "loglik", "mu_bar", "theta", "omega",
                "sigma_x", "sigma_y",
            ]
            ll = frame.loglik.to_numpy()
            assert np.all(np.diff(ll) >= -1e-8 * (1 + np.abs(ll[:-1])))

    def test_sentinel_invariants(self, smoke_result):
        rc = smoke_result.relative_counts
        both_zero = rc[(rc.true_hotspots == 0) & (rc.predicted_hotspots == 0)]
        assert (both_zero.value == 1.0).all()
        assert (both_zero.excluded == 0).all()
        excl = rc[(rc.true_hotspots == 0) & (rc.predicted_hotspots > 0)]
        assert (excl.excluded == 1).all()
        assert excl.value.isna().all()
        thr = smoke_result.thresholds
        omitted = thr[thr.omitted == 1]
        assert omitted.value.isna().all()

    def test_heatmaps_cover_grid(self, smoke_result):
        ht = smoke_result.heatmap_true
        assert len(ht) == 25
        assert set(smoke_result.heatmap_predicted.model.unique()) == {"S2"}


class TestDeterminism:
    def test_byte_identical_metric_csvs(self, smoke_config_dict, tmp_path):
        a = run_smoke(smoke_config_dict, tmp_path / "a")
        b = run_smoke(smoke_config_dict, tmp_path / "b")
        for name in METRIC_FILES:
            assert (a.out_dir / name).read_bytes() == \
                (b.out_dir / name).read_bytes(), name

    def test_different_seed_changes_outputs(self, smoke_config_dict,
                                            tmp_path):
        a = run_smoke(smoke_config_dict, tmp_path / "a")
        sim = dict(smoke_config_dict["sim"])
        sim["seed"] = 123
        b = run_smoke({**smoke_config_dict, "sim": sim}, tmp_path / "b")
        assert (a.out_dir / "relative_counts.csv").read_bytes() != \
            (b.out_dir / "relative_counts.csv").read_bytes()


class TestModelSubset:
    def test_models_flag_restricts_variants(self, smoke_config_dict,
                                            tmp_path):
        result = run_smoke(smoke_config_dict, tmp_path / "sub",
                           models=["S1", "S2"])
        assert set(result.relative_counts.model.unique()) == {"S1", "S2"}

    def test_rescaled_only_still_works(self, smoke_config_dict, tmp_path):
        result = run_smoke(smoke_config_dict, tmp_path / "s3",
                           models=["S3"])
        assert set(result.relative_counts.model.unique()) == {"S3"}


class TestSanity:
    def test_sanity_columns_and_formula(self, smoke_config_dict):
        config = config_from_dict(smoke_config_dict)
        table = run_sanity(config, integral_step=30, n_runs=2)
        assert list(table.columns) == [
            "district_id", "name", "simulated", "integral_implied",
            "survey_implied",
        ]
        districts = table.set_index("district_id")
        # survey-implied: scaled population x victimization / 182.5
        assert districts.loc[18, "survey_implied"] == pytest.approx(
            501999 * 0.0025 * 0.18 / 182.5
        )


class TestCli:
    def cli(self, *args):
        return subprocess.run(
            [sys.executable, "-m", "hotspot_sim.cli", *args],
            capture_output=True, text=True,
        )

    def test_all_with_config_and_overrides(self, smoke_config_file,
                                           tmp_path):
        out = tmp_path / "cli-out"
        proc = self.cli("all", "--config", str(smoke_config_file),
                        "--runs", "1", "--seed", "7", "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        for name in METRIC_FILES:
            assert (out / name).exists()

    def test_missing_config_exits_2(self):
        proc = self.cli("all", "--config", "/nonexistent/conf.json")
        assert proc.returncode == 2
        assert "usage" in (proc.stderr + proc.stdout).lower()

    def test_unknown_flag_exits_2(self):
        proc = self.cli("all", "--nonsense")
        assert proc.returncode == 2

    def test_models_filter(self, smoke_config_file, tmp_path):
        out = tmp_path / "cli-models"
        proc = self.cli("evaluate", "--config", str(smoke_config_file),
                        "--models", "S1,S2", "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        rc = pd.read_csv(out / "relative_counts.csv")
        assert set(rc.model.unique()) == {"S1", "S2"}

    def test_bad_model_name_exits_2(self, smoke_config_file):
        proc = self.cli("evaluate", "--config", str(smoke_config_file),
                        "--models", "S9")
        assert proc.returncode == 2

    def test_simulate_writes_datasets(self, smoke_config_file, tmp_path):
        out = tmp_path / "cli-sim"
        proc = self.cli("simulate", "--config", str(smoke_config_file),
                        "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        frame = pd.read_csv(out / "dataset_run0.csv")
        assert list(frame.columns) == [
            "run", "x", "y", "t", "district", "in_true", "in_reported",
        ]
        assert ((frame.in_true >= frame.in_reported).all())

    def test_sanity_writes_table(self, smoke_config_file, tmp_path):
        out = tmp_path / "cli-sanity"
        proc = self.cli("sanity", "--config", str(smoke_config_file),
                        "--runs", "1", "--out", str(out),
                        "--integral-step", "60")
        assert proc.returncode == 0, proc.stderr
        table = pd.read_csv(out / "sanity.csv")
        assert len(table) == 19


class TestFailureIsolation:
    def test_failed_run_reported_and_excluded(self, smoke_config_dict,
                                              tmp_path, monkeypatch):
        import hotspot_sim.experiment as exp

        real = exp.simulate_dataset

        def flaky(config, city, seed):
            from hotspot_sim.seeding import run_seed as rs

            if seed == rs(config.seed, 0):
                raise RuntimeError("injected failure")
            return real(config, city, seed)

        monkeypatch.setattr(exp, "simulate_dataset", flaky)
        result = run_smoke(smoke_config_dict, tmp_path / "flaky", runs=2)
        assert len(result.failures) == 1
        failure = result.failures[0]
        assert failure.run_index == 0
        assert failure.stage == "simulate"
        assert "injected failure" in failure.error_text
        assert result.manifest["completed_runs"] == [1]
        assert result.manifest["failed_runs"][0]["run"] == 0
        assert set(result.relative_counts.run.unique()) == {1}
