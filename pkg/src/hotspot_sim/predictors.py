"""Day-by-day hot-spot prediction for the six model variants.

Variants S1-S3 integrate a fitted point-process intensity over grid cells;
M1-M3 run a per-cell exponentially-weighted moving average of daily counts.
The *1 variants consume the full (true) crime stream, *2 and *3 only the
reported stream; *3 additionally rescales predictions by district reporting
rates.  Data-source tags on event sets enforce that a reported-only pipeline
can never read fuller data.

During evaluation no model is refitted: each day's observed events extend
the SEPP history (or the MAVG count recursion) and parameters stay fixed.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .model_core import (
    CityGrid,
    ContractViolation,
    Events,
    RollingGridIntensity,
    SeppParams,
    grid_cell_integrals,
)


class DataSourceViolation(TypeError):
    """A pipeline received events from a data stream it must not read."""


@dataclass(frozen=True)
class ModelVariant:
    name: str
    family: str          # "sepp" | "mavg"
    data: str            # "full" | "reported"
    rescaled: bool

    def __post_init__(self):
        if self.family not in ("sepp", "mavg"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.data not in ("full", "reported"):
            raise ValueError(f"unknown data source {self.data!r}")
        if self.rescaled and self.data != "reported":
            raise ValueError("rescaled variants must consume reported data")

    @property
    def required_source(self) -> str:
        return "true" if self.data == "full" else "reported"


VARIANTS = {
    "S1": ModelVariant("S1", "sepp", "full", False),
    "S2": ModelVariant("S2", "sepp", "reported", False),
    "S3": ModelVariant("S3", "sepp", "reported", True),
    "M1": ModelVariant("M1", "mavg", "full", False),
    "M2": ModelVariant("M2", "mavg", "reported", False),
    "M3": ModelVariant("M3", "mavg", "reported", True),
}

MODEL_ORDER = ("S1", "S2", "S3", "M1", "M2", "M3")


def _check_source(variant: ModelVariant, events: Events):
    if events.source != variant.required_source:
        raise DataSourceViolation(
            f"{variant.name} consumes {variant.required_source!r} events, "
            f"got {events.source!r}"
        )


@dataclass(frozen=True)
class CellPredictions:
    """Expected counts per cell (flat order, one value per in-city cell)."""

    day: float
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("predictions must be finite and >= 0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class HotspotSet:
    """Top-K cells for one day, stored as sorted flat indices."""

    day: float
    cells: np.ndarray
    k: int

    def __post_init__(self):
        c = np.ascontiguousarray(self.cells, dtype=np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "cells", c)

    def __len__(self) -> int:
        return len(self.cells)


def select_hotspots(predictions: CellPredictions, k: int) -> HotspotSet:
    """The K highest-prediction cells; ties break toward lower (iy, ix).

    Flat order is iy*nx + ix, so a stable sort on descending value resolves
    ties by ascending lexicographic cell index, making selection total and
    platform-independent.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    values = predictions.values
    k_eff = min(k, len(values))
    order = np.argsort(-values, kind="stable")
    return HotspotSet(predictions.day, np.sort(order[:k_eff]), k)


# ---------------------------------------------------------------------------
# SEPP predictions
# ---------------------------------------------------------------------------

def sepp_predict_day(params: SeppParams, history: Events, grid: CityGrid,
                     t: float, time_eps: float = None,
                     spatial_eps: float = None) -> CellPredictions:
    """Per-cell intensity integrals at the start of day ``t``."""
    if len(history) and history.t[-1] >= t:
        raise ContractViolation(
            "prediction history may only contain events before the "
            "prediction day"
        )
    values = grid_cell_integrals(params, history, grid, t,
                                 time_eps=time_eps, spatial_eps=spatial_eps)
    return CellPredictions(t, values)


def observe_day(history: Events, x, y, t, window: tuple) -> Events:
    """Extend a history with one day's events; parameters are not refitted."""
    t = np.asarray(t, dtype=np.float64)
    t0, t1 = window
    if np.any((t < t0) | (t >= t1)):
        raise ContractViolation(
            f"observed events must fall within [{t0}, {t1})"
        )
    return history.extended(x, y, t)


def events_in_window(events: Events, t0: float, t1: float) -> Events:
    """The sub-history with times in [t0, t1); keeps the source tag."""
    lo = int(np.searchsorted(events.t, t0, side="left"))
    hi = int(np.searchsorted(events.t, t1, side="left"))
    return Events(events.x[lo:hi], events.y[lo:hi], events.t[lo:hi],
                  events.source)


@dataclass(frozen=True)
class SeppPredictor:
    """A fitted SEPP stream: fixed parameters, growing event history."""

    variant: ModelVariant
    params: SeppParams
    grid: CityGrid
    history: Events
    time_eps: Optional[float] = None
    spatial_eps: Optional[float] = None

    def __post_init__(self):
        if self.variant.family != "sepp":
            raise ValueError("SeppPredictor requires a SEPP variant")
        _check_source(self.variant, self.history)

    def predict(self, t: float) -> CellPredictions:
        return sepp_predict_day(self.params, self.history, self.grid, t,
                                self.time_eps, self.spatial_eps)

    def observe(self, day_events: Events, window: tuple) -> "SeppPredictor":
        _check_source(self.variant, day_events)
        new_history = observe_day(self.history, day_events.x, day_events.y,
                                  day_events.t, window)
        return replace(self, history=new_history)


class RollingSeppPredictor:
    """A fitted SEPP stream walked day by day with a rolling cell state."""

    def __init__(self, variant: ModelVariant, params: SeppParams,
                 grid: CityGrid, history: Events, t0: float,
                 spatial_eps: float = None):
        if variant.family != "sepp":
            raise ValueError("RollingSeppPredictor requires a SEPP variant")
        _check_source(variant, history)
        if len(history) and history.t[-1] >= t0:
            raise ContractViolation(
                "prediction history may only contain events before the "
                "prediction day"
            )
        self.variant = variant
        self.params = params
        self._state = RollingGridIntensity(params, grid, history, t0,
                                           spatial_eps)

    def predict(self, t: float) -> CellPredictions:
        return CellPredictions(t, self._state.values(t))

    def observe(self, day_events: Events, window: tuple):
        _check_source(self.variant, day_events)
        self._state.advance(day_events, window)
        return self


# ---------------------------------------------------------------------------
# Moving-average predictions
# ---------------------------------------------------------------------------

def daily_cell_counts(events: Events, grid: CityGrid, t0: float,
                      n_days: int) -> np.ndarray:
    """(n_days, n_cells) matrix of event counts per day and cell."""
    out = np.zeros((n_days, grid.n_cells))
    sub = events_in_window(events, t0, t0 + n_days)
    if len(sub):
        day = np.floor(sub.t - t0).astype(np.int64)
        cell = grid.cell_index_of(sub.x, sub.y)
        np.add.at(out, (day, cell), 1.0)
    return out


def mavg_fit_bandwidth(counts: np.ndarray, betas: Sequence[float]) -> float:
    """Pick the smoothing rate minimising one-step-ahead squared error.

    A single beta serves the whole grid; the error is the mean over all
    cells and all predictable training days of (prediction - count)^2.
    Ties (errors equal up to rounding noise) go to the smallest candidate.
    """
    betas = sorted(float(b) for b in betas)
    if not betas:
        raise ValueError("bandwidth candidate set is empty")
    counts = np.asarray(counts, dtype=np.float64)
    n_days = counts.shape[0]
    if n_days < 2:
        raise ValueError("need at least 2 training days")
    best_beta = None
    best_mse = np.inf
    for beta in betas:
        decay = math.exp(-beta)
        num = counts[0].copy()
        den = 1.0
        sq_err = 0.0
        for day in range(1, n_days):
            pred = num / den
            diff = pred - counts[day]
            sq_err += float(diff @ diff)
            num = counts[day] + decay * num
            den = 1.0 + decay * den
        mse = sq_err / ((n_days - 1) * counts.shape[1])
        if best_beta is None or mse < best_mse - 1e-12 * (1.0 + best_mse):
            best_mse = mse
            best_beta = beta
    return best_beta


@dataclass(frozen=True)
class MavgState:
    """Recursive exponentially-weighted average of per-cell daily counts.

    Prediction = num / den with num = sum_k exp(-beta (k-1)) c_{t-k} and
    den the matching weight sum, both updated in O(cells) per observed day.
    """

    variant: ModelVariant
    beta: float
    grid: CityGrid
    num: np.ndarray
    den: float
    days_observed: int

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.variant.family != "mavg":
            raise ValueError("MavgState requires a MAVG variant")

    @classmethod
    def from_training(cls, variant: ModelVariant, beta: float,
                      training: Events, grid: CityGrid, t0: float,
                      n_days: int) -> "MavgState":
        _check_source(variant, training)
        counts = daily_cell_counts(training, grid, t0, n_days)
        state = cls(variant, beta, grid, np.zeros(grid.n_cells), 0.0, 0)
        for day in range(n_days):
            state = state.observe_counts(counts[day])
        return state

    def observe_counts(self, counts: np.ndarray) -> "MavgState":
        decay = math.exp(-self.beta)
        return replace(
            self,
            num=np.asarray(counts, dtype=np.float64) + decay * self.num,
            den=1.0 + decay * self.den,
            days_observed=self.days_observed + 1,
        )

    def observe(self, day_events: Events, window: tuple) -> "MavgState":
        _check_source(self.variant, day_events)
        t0, t1 = window
        sub = events_in_window(day_events, t0, t1)
        if len(sub) != len(day_events):
            raise ContractViolation(
                f"observed events must fall within [{t0}, {t1})"
            )
        counts = daily_cell_counts(day_events, self.grid, t0, 1)[0]
        return self.observe_counts(counts)

    def predict(self, t: float) -> CellPredictions:
        return mavg_predict_day(self, t)


def mavg_predict_day(state: MavgState, t: float) -> CellPredictions:
    """Weighted average of past daily counts; needs >= 1 observed day."""
    if state.days_observed < 1:
        raise ValueError("cannot predict before any day was observed")
    return CellPredictions(t, state.num / state.den)


# ---------------------------------------------------------------------------
# Reporting-rate rescaling
# ---------------------------------------------------------------------------

def rescale(predictions: CellPredictions, district_map,
            districts) -> CellPredictions:
    """Divide each cell by its district's victim crime reporting rate."""
    q = np.empty(len(predictions.values))
    q[:] = np.nan
    for d in districts:
        if d.reporting_rate <= 0:
            raise ValueError(
                f"district {d.id} has reporting rate 0; cannot rescale"
            )
        q[district_map.ids == d.id] = d.reporting_rate
    if np.any(np.isnan(q)):
        raise ValueError("some cells belong to districts without a rate")
    return CellPredictions(predictions.day, predictions.values / q)
