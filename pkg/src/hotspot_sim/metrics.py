"""Per-district equity measurements of hot-spot predictions.

For every (run, evaluation day, district, model) we record how many true and
predicted hot spots fell in the district, their ratio with the zero-count
conventions below, and the minimum ground-truth cell rate among the
district's predicted hot spots:

* both counts zero            -> relative count 1 (model correctly silent)
* true zero, predicted > 0    -> relative count excluded (sentinel)
* no predicted cell in district -> threshold omitted (sentinel)

Aggregations use exact summation (math.fsum) so fold order cannot move
results.
"""

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .predictors import HotspotSet

RELATIVE_COUNT_COLUMNS = [
    "run", "day", "district", "model",
    "true_hotspots", "predicted_hotspots", "value", "excluded",
]
THRESHOLD_COLUMNS = ["run", "day", "district", "model", "value", "omitted"]


@dataclass(frozen=True)
class MetricRecord:
    """One equity measurement for a (run, day, district, model) tuple."""

    run: int
    day: float
    district: int
    model: str
    true_hotspots: int
    predicted_hotspots: int
    relative_count: float       # NaN iff excluded
    rc_excluded: bool
    min_true_threshold: float   # NaN iff omitted
    thr_omitted: bool


def district_hotspot_counts(hotspots: HotspotSet, district_map,
                            district_ids) -> dict:
    """How many of the set's cells fall in each district."""
    cells_d = district_map.ids[hotspots.cells]
    return {int(d): int(np.sum(cells_d == d)) for d in district_ids}


def relative_count(district_id: int, true_hs: HotspotSet,
                   pred_hs: HotspotSet, district_map):
    """Predicted over true hot-spot count with the zero conventions.

    Returns ``(value, excluded)``; ``value`` is NaN when the case is
    excluded (zero true but non-zero predicted hot spots).
    """
    n_true = int(np.sum(district_map.ids[true_hs.cells] == district_id))
    n_pred = int(np.sum(district_map.ids[pred_hs.cells] == district_id))
    return _relative_count_from_counts(n_true, n_pred)


def _relative_count_from_counts(n_true: int, n_pred: int):
    if n_true == 0:
        if n_pred == 0:
            return 1.0, False
        return float("nan"), True
    return n_pred / n_true, False


def min_true_threshold(district_id: int, pred_hs: HotspotSet,
                       true_cell_rates: np.ndarray, district_map):
    """Smallest ground-truth rate among the district's predicted hot spots.

    ``true_cell_rates`` must come from the thinned-intensity oracle at the
    same day, conditioned on the full candidate history.  Returns
    ``(value, omitted)``; omitted when no predicted hot spot falls in the
    district.
    """
    in_d = pred_hs.cells[district_map.ids[pred_hs.cells] == district_id]
    if len(in_d) == 0:
        return float("nan"), True
    return float(np.min(true_cell_rates[in_d])), False


def district_hotspot_share(district_id: int, pred_hs: HotspotSet,
                           district_map) -> float:
    """Fraction of the district's cells selected as hot spots."""
    n_cells = int(np.sum(district_map.ids == district_id))
    n_pred = int(np.sum(district_map.ids[pred_hs.cells] == district_id))
    return n_pred / n_cells


def records_for_day(run: int, day: float, model: str, true_hs: HotspotSet,
                    pred_hs: HotspotSet, true_cell_rates: np.ndarray,
                    district_map, districts) -> list:
    """MetricRecords for every district on one evaluation day."""
    true_d = district_map.ids[true_hs.cells]
    pred_d = district_map.ids[pred_hs.cells]
    out = []
    for d in districts:
        n_true = int(np.sum(true_d == d.id))
        n_pred = int(np.sum(pred_d == d.id))
        rc, excluded = _relative_count_from_counts(n_true, n_pred)
        thr, omitted = min_true_threshold(d.id, pred_hs, true_cell_rates,
                                          district_map)
        out.append(MetricRecord(run, day, d.id, model, n_true, n_pred,
                                rc, excluded, thr, omitted))
    return out


# ---------------------------------------------------------------------------
# Aggregations over record collections
# ---------------------------------------------------------------------------

def records_to_frames(records):
    """Split records into the relative-count and threshold tables."""
    rc_rows = []
    thr_rows = []
    for r in records:
        rc_rows.append((r.run, r.day, r.district, r.model, r.true_hotspots,
                        r.predicted_hotspots, r.relative_count,
                        int(r.rc_excluded)))
        thr_rows.append((r.run, r.day, r.district, r.model,
                         r.min_true_threshold, int(r.thr_omitted)))
    rc = pd.DataFrame(rc_rows, columns=RELATIVE_COUNT_COLUMNS)
    thr = pd.DataFrame(thr_rows, columns=THRESHOLD_COLUMNS)
    return rc, thr


def _fsum_mean(values) -> float:
    values = [float(v) for v in values]
    if not values:
        return float("nan")
    return math.fsum(values) / len(values)


def no_true_fractions(records) -> pd.DataFrame:
    """Per (district, model): fraction of steps with zero true hot spots.

    Split into steps where the model still predicted hot spots and steps
    where it did not; the two fractions sum to the total zero-true share.
    """
    groups = {}
    for r in records:
        key = (r.district, r.model)
        tot, pred, nopred = groups.get(key, (0, 0, 0))
        tot += 1
        if r.true_hotspots == 0:
            if r.predicted_hotspots > 0:
                pred += 1
            else:
                nopred += 1
        groups[key] = (tot, pred, nopred)
    rows = [
        {
            "district": d,
            "model": m,
            "frac_predicted": pred / tot,
            "frac_not_predicted": nopred / tot,
            "frac_total": (pred + nopred) / tot,
        }
        for (d, m), (tot, pred, nopred) in sorted(groups.items())
    ]
    return pd.DataFrame(
        rows, columns=["district", "model", "frac_predicted",
                       "frac_not_predicted", "frac_total"]
    )


def overprediction(records) -> pd.DataFrame:
    """Per (district, model): mean of predicted minus true hot-spot counts."""
    groups = {}
    for r in records:
        groups.setdefault((r.district, r.model), []).append(
            r.predicted_hotspots - r.true_hotspots
        )
    rows = [
        {"district": d, "model": m, "mean_overprediction": _fsum_mean(vals)}
        for (d, m), vals in sorted(groups.items())
    ]
    return pd.DataFrame(rows,
                        columns=["district", "model", "mean_overprediction"])


def relative_count_summary(records) -> pd.DataFrame:
    """Mean/median/quartiles of non-excluded relative counts, plus the
    zero-true fraction, per (district, model)."""
    values = {}
    zero_true = {}
    totals = {}
    for r in records:
        key = (r.district, r.model)
        totals[key] = totals.get(key, 0) + 1
        if r.true_hotspots == 0:
            zero_true[key] = zero_true.get(key, 0) + 1
        if not r.rc_excluded:
            values.setdefault(key, []).append(r.relative_count)
    rows = []
    for key in sorted(totals):
        vals = np.asarray(values.get(key, []), dtype=float)
        rows.append({
            "district": key[0],
            "model": key[1],
            "n": len(vals),
            "mean": _fsum_mean(vals),
            "median": float(np.median(vals)) if len(vals) else float("nan"),
            "q1": float(np.percentile(vals, 25)) if len(vals) else float("nan"),
            "q3": float(np.percentile(vals, 75)) if len(vals) else float("nan"),
            "zero_true_fraction": zero_true.get(key, 0) / totals[key],
        })
    return pd.DataFrame(rows)


def threshold_summary(records, regular_fraction: float = 0.5) -> pd.DataFrame:
    """Mean/median/quartiles of non-omitted thresholds per (district, model).

    A district is "regular" for a model when it has a non-omitted threshold
    on at least ``regular_fraction`` of its (run, day) steps.
    """
    values = {}
    totals = {}
    for r in records:
        key = (r.district, r.model)
        totals[key] = totals.get(key, 0) + 1
        if not r.thr_omitted:
            values.setdefault(key, []).append(r.min_true_threshold)
    rows = []
    for key in sorted(totals):
        vals = np.asarray(values.get(key, []), dtype=float)
        present = len(vals) / totals[key]
        rows.append({
            "district": key[0],
            "model": key[1],
            "n": len(vals),
            "mean": _fsum_mean(vals),
            "median": float(np.median(vals)) if len(vals) else float("nan"),
            "q1": float(np.percentile(vals, 25)) if len(vals) else float("nan"),
            "q3": float(np.percentile(vals, 75)) if len(vals) else float("nan"),
            "present_fraction": present,
            "regular": present >= regular_fraction,
        })
    return pd.DataFrame(rows)


def heat_table(mean_true: np.ndarray, mean_predicted: np.ndarray):
    """Normalise the true and predicted per-cell means by their own maxima."""
    out = []
    for arr in (mean_true, mean_predicted):
        arr = np.asarray(arr, dtype=float)
        top = float(arr.max()) if arr.size else 0.0
        if top <= 0.0:
            raise ValueError("cannot normalise an all-zero table")
        out.append(arr / top)
    return tuple(out)
