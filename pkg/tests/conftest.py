import json

import pytest

SMOKE_CONFIG = {
    "sim": {
        "domain": {
            "x_min": -2.5, "x_max": 2.5, "y_min": -2.5, "y_max": 2.5,
            "cell_size": 1.0, "horizon": 365.0,
        },
        "burn_in": 40.0,
        "train_len": 300.0,
        "eval_len": 2,
        "population_scale": 0.0025,
        "time_factor": 2.0,
        "seed": 5,
        "city_seed": 3,
        "min_cells_per_district": 1,
        "generator": {
            "m": 0.3, "omega": 0.2, "sigma_x": 0.1, "sigma_y": 0.1,
            "n_centers": 6, "bandwidth": 1.2, "total_rate": None,
            "target_max_keep": 0.9,
        },
        "districts_file": None,
        "district_map_file": None,
    },
    "k_hotspots": 8,
    "runs": 1,
    "beta_grid": [0.05, 0.2, 0.5, 1.0, 2.0],
    "em_tol": 1e-3,
    "em_max_iter": 40,
    "em_time_window": None,
    "em_spatial_window": None,
    "time_eps": None,
    "spatial_eps": None,
    "edge_correction": False,
    "models": ["S1", "S2", "S3", "M1", "M2", "M3"],
    "heatmap_model": "S2",
    "out_dir": None,
    "jobs": 1,
    "dump_datasets": False,
    "dump_predictions": False,
    "dump_fit_reports": True,
}


@pytest.fixture()
def smoke_config_dict():
    return json.loads(json.dumps(SMOKE_CONFIG))


@pytest.fixture()
def smoke_config_file(tmp_path, smoke_config_dict):
    path = tmp_path / "smoke.json"
    path.write_text(json.dumps(smoke_config_dict))
    return path
