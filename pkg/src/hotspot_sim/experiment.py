"""Full-study orchestration: simulate, fit, evaluate, write tables.

Each run simulates a fresh dataset, discards the burn-in window, fits the
point-process models by EM and the moving-average bandwidth on the training
window (full and reported streams), then walks the evaluation days
predicting with all requested variants, selecting top-K hot spots, scoring
them against the ground-truth oracle, and finally observing the day's data.
Runs are independent (derived seeds) and may execute in parallel; a failed
run is reported and excluded from aggregation.
"""

import dataclasses
import hashlib
import json
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__ as _pkg_version
from . import metrics
from .em_fitter import fit
from .model_core import SpatialDomain
from .model_core import RollingGridIntensity
from .predictors import (
    MODEL_ORDER,
    VARIANTS,
    MavgState,
    RollingSeppPredictor,
    daily_cell_counts,
    events_in_window,
    mavg_fit_bandwidth,
    rescale,
    select_hotspots,
)
from .predictors import CellPredictions
from .seeding import run_seed
from .simulator import (
    GeneratorConfig,
    SimConfig,
    build_city,
    calibrate_total_rate,
    keep_prob_per_cell,
    sanity_summary,
    simulate_dataset,
    write_dataset_csv,
)

OUT_ENV = "HOTSPOT_SIM_OUT"

METRIC_FILES = (
    "relative_counts.csv",
    "no_true_fractions.csv",
    "overprediction.csv",
    "thresholds.csv",
    "heatmap_true.csv",
    "heatmap_predicted.csv",
)

DEFAULT_BETA_GRID = tuple(np.linspace(0.02, 2.0, 25).tolist())


@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    k_hotspots: int = 50
    runs: int = 50
    beta_grid: tuple = DEFAULT_BETA_GRID
    em_tol: float = 1e-4
    em_max_iter: int = 200
    em_time_window: float = None     # fixed pair truncation for fitting
    em_spatial_window: float = None
    time_eps: float = None       # None -> exact triggering sums
    spatial_eps: float = None
    edge_correction: bool = False
    models: tuple = MODEL_ORDER
    heatmap_model: str = "S2"
    out_dir: str = None
    jobs: int = 1
    dump_datasets: bool = False
    dump_predictions: bool = False
    dump_fit_reports: bool = True

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.k_hotspots < 1:
            raise ValueError("k_hotspots must be >= 1")
        bad = [m for m in self.models if m not in VARIANTS]
        if bad:
            raise ValueError(f"unknown model variants: {bad}")
        if self.heatmap_model not in VARIANTS:
            raise ValueError(f"unknown heatmap model {self.heatmap_model!r}")


# ---------------------------------------------------------------------------
# Config file round-trip
# ---------------------------------------------------------------------------

def config_to_dict(config: ExperimentConfig) -> dict:
    def unpack(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: unpack(getattr(obj, f.name))
                    for f in dataclasses.fields(obj)}
        if isinstance(obj, (tuple, list)):
            return [unpack(v) for v in obj]
        return obj

    return unpack(config)


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    sim_data = dict(data.pop("sim", {}))
    domain = SpatialDomain(**sim_data.pop("domain", {})) \
        if "domain" in sim_data else SpatialDomain(-15, 15, -14.5, 14.5)
    gen = GeneratorConfig(**sim_data.pop("generator", {}))
    sim = SimConfig(domain=domain, generator=gen, **sim_data)
    for key in ("beta_grid", "models"):
        if key in data and data[key] is not None:
            data[key] = tuple(data[key])
    return ExperimentConfig(sim=sim, **data)


def load_config(path) -> ExperimentConfig:
    """Read a JSON config; the name "default" loads the packaged profile."""
    if str(path) == "default":
        ref = resources.files("hotspot_sim.data") / "default.json"
        with ref.open("r", encoding="utf-8") as fh:
            return config_from_dict(json.load(fh))
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def config_hash(config: ExperimentConfig) -> str:
    text = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Single run
# ---------------------------------------------------------------------------

@dataclass
class RunOutput:
    run: int
    records: list
    fit_frames: dict            # stream -> fit-report DataFrame
    heat_true_sum: np.ndarray
    heat_pred_sum: np.ndarray
    n_days: int
    dataset: object = None
    prediction_rows: list = None


def _needed_streams(models):
    sepp = set()
    mavg = set()
    for name in models:
        v = VARIANTS[name]
        stream = "full" if v.data == "full" else "reported"
        (sepp if v.family == "sepp" else mavg).add(stream)
    return sepp, mavg


def run_single(config: ExperimentConfig, total_rate: float, run_index: int,
               keep_dataset: bool = False) -> RunOutput:
    """Simulate, train and evaluate one run; returns its records."""
    sim = config.sim
    city = build_city(sim, total_rate=total_rate)
    grid, dmap = city.grid, city.district_map
    stage = "simulate"
    try:
        seed = run_seed(sim.seed, run_index)
        dataset = simulate_dataset(sim, city, seed)

        stage = "train"
        t0 = float(sim.burn_in)
        t_eval0 = float(sim.burn_in + sim.train_len)
        n_train = int(sim.train_len)
        train_true = events_in_window(dataset.true_set, t0, t_eval0)
        train_rep = events_in_window(dataset.reported_set, t0, t_eval0)
        sepp_streams, mavg_streams = _needed_streams(config.models)
        train_of = {"full": train_true, "reported": train_rep}

        fit_frames = {}
        sepp_pred = {}
        for stream in sorted(sepp_streams):
            report = fit(
                train_of[stream], sim.domain, (t0, t_eval0),
                tol=config.em_tol, max_iter=config.em_max_iter,
                time_window=config.em_time_window,
                spatial_window=config.em_spatial_window,
                edge_correction=config.edge_correction,
            )
            fit_frames[stream] = report.to_frame()
            variant = VARIANTS["S1" if stream == "full" else "S2"]
            sepp_pred[stream] = RollingSeppPredictor(
                variant, report.params, grid, train_of[stream], t_eval0,
                config.spatial_eps,
            )
        mavg_pred = {}
        for stream in sorted(mavg_streams):
            counts = daily_cell_counts(train_of[stream], grid, t0, n_train)
            beta = mavg_fit_bandwidth(counts, config.beta_grid)
            variant = VARIANTS["M1" if stream == "full" else "M2"]
            mavg_pred[stream] = MavgState.from_training(
                variant, beta, train_of[stream], grid, t0, n_train,
            )

        stage = "evaluate"
        keep_cell = keep_prob_per_cell(dmap, dataset.keep_prob)
        records = []
        heat_true = np.zeros(grid.n_cells)
        heat_pred = np.zeros(grid.n_cells)
        prediction_rows = [] if config.dump_predictions else None
        k = config.k_hotspots
        oracle = RollingGridIntensity(
            city.generator, grid, dataset.candidates.before(t_eval0),
            t_eval0, config.spatial_eps,
        )
        for step in range(int(sim.eval_len)):
            t = t_eval0 + step
            true_rates = keep_cell * oracle.values(t)
            heat_true += true_rates
            true_hs = select_hotspots(CellPredictions(t, true_rates), k)
            preds = {}
            if "full" in sepp_pred:
                preds["S1"] = sepp_pred["full"].predict(t)
            if "reported" in sepp_pred:
                preds["S2"] = sepp_pred["reported"].predict(t)
                preds["S3"] = rescale(preds["S2"], dmap, city.districts)
            if "full" in mavg_pred:
                preds["M1"] = mavg_pred["full"].predict(t)
            if "reported" in mavg_pred:
                preds["M2"] = mavg_pred["reported"].predict(t)
                preds["M3"] = rescale(preds["M2"], dmap, city.districts)
            if config.heatmap_model in preds:
                heat_pred += preds[config.heatmap_model].values
            for name in config.models:
                pred_hs = select_hotspots(preds[name], k)
                records.extend(metrics.records_for_day(
                    run_index, t, name, true_hs, pred_hs, true_rates,
                    dmap, city.districts,
                ))
                if prediction_rows is not None:
                    hs_mask = np.zeros(grid.n_cells, dtype=bool)
                    hs_mask[pred_hs.cells] = True
                    for flat in range(grid.n_cells):
                        prediction_rows.append(
                            (run_index, name, t, flat % grid.nx,
                             flat // grid.nx,
                             float(preds[name].values[flat]),
                             int(hs_mask[flat]))
                        )
            window = (t, t + 1.0)
            day_true = events_in_window(dataset.true_set, *window)
            day_rep = events_in_window(dataset.reported_set, *window)
            day_of = {"full": day_true, "reported": day_rep}
            oracle.advance(events_in_window(dataset.candidates, *window),
                           window)
            for stream in list(sepp_pred):
                sepp_pred[stream] = sepp_pred[stream].observe(
                    day_of[stream], window)
            for stream in list(mavg_pred):
                mavg_pred[stream] = mavg_pred[stream].observe(
                    day_of[stream], window)
        out = RunOutput(run_index, records, fit_frames, heat_true, heat_pred,
                        int(sim.eval_len))
        out.prediction_rows = prediction_rows
        if keep_dataset or config.dump_datasets:
            out.dataset = dataset
        return out
    except Exception as exc:
        raise RunFailure(run_index, stage, exc) from exc


class RunFailure(RuntimeError):
    def __init__(self, run_index: int, stage: str, error: Exception):
        super().__init__(
            f"run {run_index} failed during {stage}: {error}"
        )
        self.run_index = run_index
        self.stage = stage
        self.error_text = f"{type(error).__name__}: {error}"
        self.trace = traceback.format_exc()


# ---------------------------------------------------------------------------
# Full experiment
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    out_dir: Path
    manifest: dict
    relative_counts: pd.DataFrame
    thresholds: pd.DataFrame
    no_true_fractions: pd.DataFrame
    overprediction: pd.DataFrame
    heatmap_true: pd.DataFrame
    heatmap_predicted: pd.DataFrame
    failures: list


def resolve_out_dir(config: ExperimentConfig) -> Path:
    if config.out_dir:
        return Path(config.out_dir)
    return Path(os.environ.get(OUT_ENV, "hotspot-sim-out"))


def _worker(args):
    config_dict, total_rate, run_index = args
    config = config_from_dict(config_dict)
    return run_single(config, total_rate, run_index)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Execute all runs and write the metric tables and manifest."""
    out_dir = resolve_out_dir(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    total_rate = config.sim.generator.total_rate
    if total_rate is None:
        total_rate = calibrate_total_rate(config.sim)

    outputs = {}
    failures = []
    if config.jobs > 1:
        cfg_dict = config_to_dict(config)
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = {
                pool.submit(_worker, (cfg_dict, total_rate, r)): r
                for r in range(config.runs)
            }
            for fut, r in futures.items():
                try:
                    outputs[r] = fut.result()
                except RunFailure as f:
                    failures.append(f)
    else:
        for r in range(config.runs):
            try:
                outputs[r] = run_single(config, total_rate, r)
            except RunFailure as f:
                failures.append(f)

    completed = [outputs[r] for r in sorted(outputs)]
    records = [rec for out in completed for rec in out.records]
    rc_frame, thr_frame = metrics.records_to_frames(records)
    nt_frame = metrics.no_true_fractions(records)
    op_frame = metrics.overprediction(records)

    city = build_city(config.sim, total_rate=total_rate)
    nx = city.grid.nx
    total_days = sum(out.n_days for out in completed)
    heat_true = np.zeros(city.grid.n_cells)
    heat_pred = np.zeros(city.grid.n_cells)
    for out in completed:
        heat_true += out.heat_true_sum
        heat_pred += out.heat_pred_sum
    if total_days > 0:
        heat_true /= total_days
        heat_pred /= total_days
    flat = np.arange(city.grid.n_cells)
    heat_true_frame = pd.DataFrame({
        "ix": flat % nx, "iy": flat // nx, "value": heat_true,
    })
    heat_pred_frame = pd.DataFrame({
        "ix": flat % nx, "iy": flat // nx,
        "model": config.heatmap_model, "value": heat_pred,
    })

    rc_frame.to_csv(out_dir / "relative_counts.csv", index=False)
    thr_frame.to_csv(out_dir / "thresholds.csv", index=False)
    nt_frame.to_csv(out_dir / "no_true_fractions.csv", index=False)
    op_frame.to_csv(out_dir / "overprediction.csv", index=False)
    heat_true_frame.to_csv(out_dir / "heatmap_true.csv", index=False)
    heat_pred_frame.to_csv(out_dir / "heatmap_predicted.csv", index=False)

    if config.dump_fit_reports:
        for out in completed:
            for stream, frame in out.fit_frames.items():
                frame.to_csv(
                    out_dir / f"fit_report_run{out.run}_{stream}.csv",
                    index=False,
                )
    if config.dump_datasets:
        for out in completed:
            if out.dataset is not None:
                write_dataset_csv(out_dir / f"dataset_run{out.run}.csv",
                                  out.run, out.dataset)
    if config.dump_predictions:
        rows = [row for out in completed
                for row in (out.prediction_rows or [])]
        pd.DataFrame(rows, columns=[
            "run", "model", "day", "ix", "iy", "prediction", "is_hotspot",
        ]).to_csv(out_dir / "predictions.csv", index=False)

    eval_start = config.sim.burn_in + config.sim.train_len
    manifest = {
        "package_version": _pkg_version,
        "config": config_to_dict(config),
        "config_hash": config_hash(config),
        "master_seed": config.sim.seed,
        "run_seeds": {r: run_seed(config.sim.seed, r)
                      for r in range(config.runs)},
        "calibrated_total_rate": total_rate,
        "eval_window_days": [int(eval_start),
                             int(eval_start + config.sim.eval_len - 1)],
        "heatmap_day_span": "evaluation",
        "completed_runs": sorted(outputs),
        "failed_runs": [
            {"run": f.run_index, "stage": f.stage, "error": f.error_text}
            for f in failures
        ],
        "outputs": list(METRIC_FILES),
        "versions": _library_versions(),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)

    return ExperimentResult(out_dir, manifest, rc_frame, thr_frame, nt_frame,
                            op_frame, heat_true_frame, heat_pred_frame,
                            failures)


def _library_versions() -> dict:
    import numpy
    import scipy

    versions = {"numpy": numpy.__version__, "scipy": scipy.__version__}
    try:
        import numba

        versions["numba"] = numba.__version__
    except ImportError:
        versions["numba"] = None
    return versions


# ---------------------------------------------------------------------------
# Reduced pipelines backing the `simulate` and `fit` subcommands
# ---------------------------------------------------------------------------

def _manifest_lite(config: ExperimentConfig, total_rate: float,
                   outputs: list) -> dict:
    return {
        "package_version": _pkg_version,
        "config": config_to_dict(config),
        "config_hash": config_hash(config),
        "master_seed": config.sim.seed,
        "calibrated_total_rate": total_rate,
        "outputs": outputs,
        "versions": _library_versions(),
    }


def run_simulate_only(config: ExperimentConfig) -> Path:
    """Simulate all runs and dump the datasets (no fitting/evaluation)."""
    out_dir = resolve_out_dir(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    total_rate = config.sim.generator.total_rate
    if total_rate is None:
        total_rate = calibrate_total_rate(config.sim)
    city = build_city(config.sim, total_rate=total_rate)
    written = []
    for r in range(config.runs):
        dataset = simulate_dataset(config.sim, city,
                                   run_seed(config.sim.seed, r))
        name = f"dataset_run{r}.csv"
        write_dataset_csv(out_dir / name, r, dataset)
        written.append(name)
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(_manifest_lite(config, total_rate, written), fh,
                  indent=2, sort_keys=True)
    return out_dir


def run_fit_only(config: ExperimentConfig) -> Path:
    """Simulate and fit the point-process streams; dump fit reports."""
    out_dir = resolve_out_dir(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    total_rate = config.sim.generator.total_rate
    if total_rate is None:
        total_rate = calibrate_total_rate(config.sim)
    city = build_city(config.sim, total_rate=total_rate)
    sim = config.sim
    t0 = float(sim.burn_in)
    t_eval0 = float(sim.burn_in + sim.train_len)
    written = []
    for r in range(config.runs):
        dataset = simulate_dataset(sim, city, run_seed(sim.seed, r))
        streams = {
            "full": events_in_window(dataset.true_set, t0, t_eval0),
            "reported": events_in_window(dataset.reported_set, t0, t_eval0),
        }
        for stream, events in streams.items():
            report = fit(
                events, sim.domain, (t0, t_eval0), tol=config.em_tol,
                max_iter=config.em_max_iter,
                time_window=config.em_time_window,
                spatial_window=config.em_spatial_window,
                edge_correction=config.edge_correction,
            )
            name = f"fit_report_run{r}_{stream}.csv"
            report.to_frame().to_csv(out_dir / name, index=False)
            written.append(name)
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(_manifest_lite(config, total_rate, written), fh,
                  indent=2, sort_keys=True)
    return out_dir


# ---------------------------------------------------------------------------
# Sanity table (district-wise daily counts, three routes)
# ---------------------------------------------------------------------------

def run_sanity(config: ExperimentConfig, integral_step: int = 7,
               n_runs: int = None) -> pd.DataFrame:
    """Average the per-district sanity table over ``n_runs`` simulations."""
    n_runs = config.runs if n_runs is None else n_runs
    total_rate = config.sim.generator.total_rate
    if total_rate is None:
        total_rate = calibrate_total_rate(config.sim)
    city = build_city(config.sim, total_rate=total_rate)
    frames = []
    for r in range(n_runs):
        dataset = simulate_dataset(config.sim, city,
                                   run_seed(config.sim.seed, r))
        frames.append(sanity_summary(
            dataset, city, config.sim, integral_step=integral_step,
        ))
    merged = frames[0][["district_id", "name", "survey_implied"]].copy()
    merged["simulated"] = np.mean(
        [f["simulated"].to_numpy() for f in frames], axis=0)
    merged["integral_implied"] = np.mean(
        [f["integral_implied"].to_numpy() for f in frames], axis=0)
    return merged[["district_id", "name", "simulated", "integral_implied",
                   "survey_implied"]]
