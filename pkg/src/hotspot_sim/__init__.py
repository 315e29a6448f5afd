"""Synthetic city crime simulation and hot-spot prediction equity lab."""

__version__ = "0.1.0"

from .model_core import (  # noqa: F401
    BACKGROUND_SD_KM,
    CityGrid,
    ContractViolation,
    Event,
    Events,
    GeneratorModel,
    GridCell,
    MixtureBackground,
    RollingGridIntensity,
    SeppParams,
    SpatialDomain,
    background_intensity,
    cell_integral,
    conditional_intensity,
    grid_cell_integrals,
    offspring_mean,
    triggering,
)
from .simulator import (  # noqa: F401
    CrimeDataset,
    DistrictMap,
    DistrictRecord,
    GeneratorConfig,
    SimConfig,
    build_city,
    calibrate_total_rate,
    load_districts,
    sample_candidates,
    sanity_summary,
    simulate_dataset,
    thin_reported,
    thin_true,
    true_expected_cell_count,
    victimization_keep_prob,
)
from .em_fitter import (  # noqa: F401
    BranchingProbabilities,
    FitReport,
    e_step,
    expected_loglik,
    fit,
    m_step,
)
from .predictors import (  # noqa: F401
    MODEL_ORDER,
    VARIANTS,
    CellPredictions,
    HotspotSet,
    MavgState,
    ModelVariant,
    RollingSeppPredictor,
    SeppPredictor,
    mavg_fit_bandwidth,
    mavg_predict_day,
    observe_day,
    rescale,
    select_hotspots,
    sepp_predict_day,
)
from .metrics import (  # noqa: F401
    MetricRecord,
    district_hotspot_share,
    heat_table,
    min_true_threshold,
    no_true_fractions,
    overprediction,
    relative_count,
)
from .experiment import (  # noqa: F401
    ExperimentConfig,
    load_config,
    run_experiment,
    run_sanity,
)
