"""Figure renderers for the hotspot-sim metric CSVs.

Six figure kinds, all read-only consumers of the documented CSV schemas:

    rel-count-box   per-district boxplots of relative hot-spot counts
    no-true-bars    stacked fractions of steps without true hot spots
    heatmap         normalised true vs predicted mean cell rates
    threshold-box   per-district boxplots of hot-spot selection thresholds
    sanity-bar      simulated / integral / survey daily counts per district
    overpred-bar    mean over- or under-predicted hot spots per district

Sentinel rows are dropped exactly as the table conventions prescribe:
relative counts marked ``excluded`` and thresholds marked ``omitted`` never
reach an axis.  Nothing is recomputed; every number shown traces to a CSV
cell.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

MODEL_ORDER = ["S1", "S2", "S3", "M1", "M2", "M3"]

SCHEMAS = {
    "rel-count-box": ["run", "day", "district", "model", "true_hotspots",
                      "predicted_hotspots", "value", "excluded"],
    "no-true-bars": ["district", "model", "frac_predicted",
                     "frac_not_predicted", "frac_total"],
    "threshold-box": ["run", "day", "district", "model", "value", "omitted"],
    "sanity-bar": ["district_id", "name", "simulated", "integral_implied",
                   "survey_implied"],
    "overpred-bar": ["district", "model", "mean_overprediction"],
    "heatmap": ["ix", "iy", "value"],
}

FIGURE_KINDS = tuple(SCHEMAS)


class SchemaError(ValueError):
    """A CSV is missing columns the figure needs."""


def read_table(path, kind) -> pd.DataFrame:
    frame = pd.read_csv(path)
    missing = [c for c in SCHEMAS[kind] if c not in frame.columns]
    if missing:
        raise SchemaError(
            f"{path}: missing column(s) {', '.join(missing)} for {kind}"
        )
    return frame


def _models_present(frame) -> list:
    present = set(frame.model.unique())
    ordered = [m for m in MODEL_ORDER if m in present]
    return ordered + sorted(present - set(MODEL_ORDER))


def _district_filter(frame, districts, column="district"):
    if districts:
        frame = frame[frame[column].isin(districts)]
    return frame


def _grouped_box(ax, frame, value_column, districts, models):
    """One box per (district, model), grouped by district."""
    width = 0.8 / max(len(models), 1)
    positions = []
    data = []
    colors = plt.get_cmap("tab10")
    for i, d in enumerate(districts):
        for j, m in enumerate(models):
            vals = frame[(frame.district == d)
                         & (frame.model == m)][value_column].to_numpy()
            if len(vals) == 0:
                continue
            positions.append(i + (j - (len(models) - 1) / 2) * width)
            data.append(vals)
    if data:
        boxes = ax.boxplot(
            data, positions=positions, widths=width * 0.9,
            patch_artist=True, manage_ticks=False,
            flierprops={"markersize": 2, "alpha": 0.4},
        )
        k = 0
        for i, d in enumerate(districts):
            for j, m in enumerate(models):
                vals = frame[(frame.district == d) & (frame.model == m)]
                if len(vals) == 0:
                    continue
                boxes["boxes"][k].set_facecolor(colors(j % 10))
                boxes["boxes"][k].set_alpha(0.7)
                k += 1
        handles = [plt.Rectangle((0, 0), 1, 1, fc=colors(j % 10), alpha=0.7)
                   for j in range(len(models))]
        ax.legend(handles, models, ncol=min(len(models), 6), fontsize=8)
    ax.set_xticks(range(len(districts)))
    ax.set_xticklabels(districts)
    ax.set_xlabel("district")


def rel_count_box(paths, out, districts=None):
    frame = read_table(paths[0], "rel-count-box")
    frame = frame[frame.excluded == 0]
    frame = _district_filter(frame, districts)
    fig, ax = plt.subplots(figsize=(12, 5))
    models = _models_present(frame) if len(frame) else []
    _grouped_box(ax, frame, "value", sorted(frame.district.unique()), models)
    ax.axhline(1.0, color="grey", lw=0.8, ls="--")
    ax.set_ylabel("predicted / true hot spots")
    ax.set_title("Relative number of predicted hot spots per district")
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def threshold_box(paths, out, districts=None):
    frame = read_table(paths[0], "threshold-box")
    frame = frame[frame.omitted == 0]
    frame = _district_filter(frame, districts)
    fig, ax = plt.subplots(figsize=(12, 5))
    models = _models_present(frame) if len(frame) else []
    _grouped_box(ax, frame, "value", sorted(frame.district.unique()), models)
    ax.set_ylabel("minimum true rate among predicted hot spots")
    ax.set_title("True crime thresholds for hot-spot selection")
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def no_true_bars(paths, out, districts=None):
    frame = read_table(paths[0], "no-true-bars")
    frame = _district_filter(frame, districts)
    models = _models_present(frame) if len(frame) else ["S1"]
    fig, axes = plt.subplots(
        len(models) or 1, 1, figsize=(11, 2.2 * max(len(models), 1)),
        sharex=True, squeeze=False,
    )
    for ax, model in zip(axes.ravel(), models):
        sub = frame[frame.model == model].sort_values("district")
        xs = np.arange(len(sub))
        ax.bar(xs, sub.frac_not_predicted, label="no predicted hot spots",
               color="#888888")
        ax.bar(xs, sub.frac_predicted, bottom=sub.frac_not_predicted,
               label="predicted hot spots", color="#d62728")
        ax.set_xticks(xs)
        ax.set_xticklabels(sub.district.tolist())
        ax.set_ylim(0, 1)
        ax.set_ylabel(model)
    axes.ravel()[0].legend(fontsize=8)
    axes.ravel()[0].set_title(
        "Fraction of steps with no true hot spots in the district"
    )
    axes.ravel()[-1].set_xlabel("district")
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def overpred_bar(paths, out, districts=None):
    frame = read_table(paths[0], "overpred-bar")
    frame = _district_filter(frame, districts)
    models = _models_present(frame) if len(frame) else []
    fig, ax = plt.subplots(figsize=(11, 4.5))
    width = 0.8 / max(len(models), 1)
    ds = sorted(frame.district.unique())
    for j, m in enumerate(models):
        sub = frame[frame.model == m].set_index("district")
        xs = np.array([ds.index(d) for d in sub.index])
        ax.bar(xs + (j - (len(models) - 1) / 2) * width,
               sub.mean_overprediction, width * 0.9, label=m)
    ax.axhline(0.0, color="black", lw=0.8)
    ax.set_xticks(range(len(ds)))
    ax.set_xticklabels(ds)
    ax.set_xlabel("district")
    ax.set_ylabel("mean (predicted - true) hot spots")
    ax.set_title("Over- and under-predicted hot spots per district")
    if models:
        ax.legend(ncol=min(len(models), 6), fontsize=8)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def sanity_bar(paths, out, districts=None):
    frame = read_table(paths[0], "sanity-bar")
    frame = _district_filter(frame, districts, column="district_id")
    frame = frame.sort_values("district_id")
    xs = np.arange(len(frame))
    fig, ax = plt.subplots(figsize=(11, 4.5))
    for j, (col, label) in enumerate([
        ("simulated", "simulated"),
        ("integral_implied", "intensity integral"),
        ("survey_implied", "survey implied"),
    ]):
        ax.bar(xs + (j - 1) * 0.27, frame[col], 0.25, label=label)
    ax.set_xticks(xs)
    ax.set_xticklabels(frame.district_id.tolist())
    ax.set_xlabel("district")
    ax.set_ylabel("average daily true crimes")
    ax.set_title("District-wise sanity check of the synthetic crime data")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def heatmap(paths, out, districts=None):
    """Side-by-side maps, each normalised by its own maximum."""
    frames = [read_table(p, "heatmap") for p in paths]
    titles = ["true mean cell rate", "predicted mean cell rate"]
    fig, axes = plt.subplots(1, len(frames), figsize=(6 * len(frames), 5),
                             squeeze=False)
    for ax, frame, title in zip(axes.ravel(), frames, titles):
        nx = int(frame.ix.max()) + 1 if len(frame) else 1
        ny = int(frame.iy.max()) + 1 if len(frame) else 1
        img = np.zeros((ny, nx))
        img[frame.iy.to_numpy(), frame.ix.to_numpy()] = frame.value
        top = img.max()
        if top > 0:
            img = img / top
        shown = ax.imshow(img, origin="lower", cmap="inferno", vmin=0.0,
                          vmax=1.0)
        ax.set_title(title)
        fig.colorbar(shown, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


RENDERERS = {
    "rel-count-box": rel_count_box,
    "no-true-bars": no_true_bars,
    "heatmap": heatmap,
    "threshold-box": threshold_box,
    "sanity-bar": sanity_bar,
    "overpred-bar": overpred_bar,
}


def render(kind, paths, out, districts=None):
    if kind not in RENDERERS:
        raise ValueError(
            f"unknown figure kind {kind!r}; choose from {FIGURE_KINDS}"
        )
    RENDERERS[kind](list(paths), out, districts)
    return out
