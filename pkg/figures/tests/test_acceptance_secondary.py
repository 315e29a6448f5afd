"""Secondary acceptance: render every figure kind from a real experiment.

Drives the primary package exclusively through its command-line interface
and file outputs (a 2-run smoke study plus the sanity table), then renders
all six figure kinds from the produced CSVs.
"""

import json
import subprocess

import pytest

SMOKE_CONFIG = {
    "sim": {
        "domain": {"x_min": -2.5, "x_max": 2.5, "y_min": -2.5, "y_max": 2.5,
                   "cell_size": 1.0, "horizon": 365.0},
        "burn_in": 40.0, "train_len": 300.0, "eval_len": 2,
        "population_scale": 0.0025, "time_factor": 2.0,
        "seed": 5, "city_seed": 3, "min_cells_per_district": 1,
        "generator": {"m": 0.3, "omega": 0.2, "sigma_x": 0.1,
                      "sigma_y": 0.1, "n_centers": 6, "bandwidth": 1.2,
                      "total_rate": None, "target_max_keep": 0.9},
        "districts_file": None, "district_map_file": None,
    },
    "k_hotspots": 8, "runs": 2,
    "beta_grid": [0.05, 0.2, 0.5, 1.0, 2.0],
    "em_tol": 1e-3, "em_max_iter": 40,
    "em_time_window": None, "em_spatial_window": None,
    "time_eps": None, "spatial_eps": None, "edge_correction": False,
    "models": ["S1", "S2", "S3", "M1", "M2", "M3"],
    "heatmap_model": "S2", "out_dir": None, "jobs": 1,
    "dump_datasets": False, "dump_predictions": False,
    "dump_fit_reports": False,
}


@pytest.fixture(scope="module")
def study_dir(tmp_path_factory):
    base = tmp_path_factory.mktemp("smoke-study")
    config_path = base / "smoke.json"
    config_path.write_text(json.dumps(SMOKE_CONFIG))
    out = base / "out"
    for command in (
        ["hotspot-sim", "all", "--config", str(config_path),
         "--out", str(out)],
        ["hotspot-sim", "sanity", "--config", str(config_path),
         "--runs", "1", "--out", str(out), "--integral-step", "30"],
    ):
        proc = subprocess.run(command, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
    return out


CASES = {
    "rel-count-box": ["relative_counts.csv"],
    "no-true-bars": ["no_true_fractions.csv"],
    "overpred-bar": ["overprediction.csv"],
    "threshold-box": ["thresholds.csv"],
    "heatmap": ["heatmap_true.csv", "heatmap_predicted.csv"],
    "sanity-bar": ["sanity.csv"],
}


@pytest.mark.parametrize("kind", sorted(CASES))
def test_render_from_smoke_experiment(study_dir, tmp_path, kind):
    args = ["render", kind, "--out", str(tmp_path / f"{kind}.png")]
    for name in CASES[kind]:
        args += ["--in", str(study_dir / name)]
    proc = subprocess.run(args, capture_output=True, text=True)
    print(f"ACCEPTANCE figures-{kind}: "
          f"{'PASS' if proc.returncode == 0 else 'FAIL'}")
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / f"{kind}.png").stat().st_size > 0
