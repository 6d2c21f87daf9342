"""Fisher-criterion feature ranking and selection-frequency reporting.

The criterion scores a feature by between-class mean separation over summed
within-class variances:

    J = |mean_A - mean_B| / (var_A + var_B)      (unbiased variances)

Larger J means more class information. Zero pooled variance with unequal
means ranks first (+inf sentinel); zero variance and equal means scores 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import BAND_ORDER, EEG_CHANNELS_31, EEG_FEATURE_NAMES, PERIPHERAL_FEATURE_NAMES


class SelectionError(Exception):
    pass


@dataclass(frozen=True)
class FisherScore:
    feature_name: str
    j_value: float


def fisher_score(values_a: np.ndarray, values_b: np.ndarray, name: str = "") -> FisherScore:
    a = np.asarray(values_a, dtype=np.float64)
    b = np.asarray(values_b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise SelectionError(f"need >= 2 samples per class, got {len(a)} and {len(b)}")
    sep = abs(float(np.mean(a)) - float(np.mean(b)))
    pooled = float(np.var(a, ddof=1)) + float(np.var(b, ddof=1))
    if pooled == 0.0:
        j = 0.0 if sep == 0.0 else np.inf
    else:
        j = sep / pooled
    return FisherScore(feature_name=name, j_value=j)


def fisher_scores(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vectorized J for every column of ``X``; ``y`` holds 0/1 labels."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    a, b = X[y == 0], X[y == 1]
    if len(a) < 2 or len(b) < 2:
        raise SelectionError(f"need >= 2 samples per class, got {len(a)} and {len(b)}")
    sep = np.abs(a.mean(axis=0) - b.mean(axis=0))
    pooled = a.var(axis=0, ddof=1) + b.var(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        j = np.where(pooled > 0, sep / np.where(pooled > 0, pooled, 1.0), np.where(sep > 0, np.inf, 0.0))
    return j


def rank_and_select(X: np.ndarray, y: np.ndarray, names: tuple[str, ...], k: int) -> list[str]:
    """Top-``k`` feature names by descending J; ties break by canonical
    (input) order, so the ranking is deterministic."""
    if k < 1 or k > X.shape[1]:
        raise SelectionError(f"k={k} outside 1..{X.shape[1]}")
    if len(set(np.asarray(y).tolist())) < 2:
        raise SelectionError("training labels contain a single class")
    j = fisher_scores(X, y)
    # lexsort: last key is primary. Descending J, then ascending canonical index.
    order = np.lexsort((np.arange(len(j)), -j))
    return [names[i] for i in order[:k]]


@dataclass
class SelectionFrequencyReport:
    """Per-feature selection counts plus band/electrode/sensor aggregations."""

    n_trials: int
    feature_counts: dict[str, int]
    feature_frequencies: dict[str, float]
    band_counts: dict[str, int] = field(default_factory=dict)
    band_frequencies: dict[str, float] = field(default_factory=dict)
    electrode_counts: dict[str, int] = field(default_factory=dict)
    sensor_counts: dict[str, int] = field(default_factory=dict)
    sensor_frequencies: dict[str, float] = field(default_factory=dict)


def selection_report(trial_selections: list[list[str]], modality: str = "EEG") -> SelectionFrequencyReport:
    """Aggregate per-trial selected feature lists.

    Feature frequency = trials selecting it / total trials. Band and sensor
    frequencies are shares of all selections. Electrode counts are the
    number of trials in which any feature of that electrode was chosen (the
    topography statistic, max = number of trials).
    """
    if not trial_selections:
        raise SelectionError("no trial logs")
    names = EEG_FEATURE_NAMES if modality == "EEG" else PERIPHERAL_FEATURE_NAMES
    n_trials = len(trial_selections)
    counts = {name: 0 for name in names}
    for selected in trial_selections:
        for f in selected:
            if f not in counts:
                raise SelectionError(f"unknown feature {f!r} for modality {modality}")
            counts[f] += 1
    total_selected = sum(counts.values())
    freqs = {name: counts[name] / n_trials for name in names}

    report = SelectionFrequencyReport(
        n_trials=n_trials,
        feature_counts=counts,
        feature_frequencies=freqs,
    )
    if modality == "EEG":
        band_counts = {band: 0 for band in BAND_ORDER}
        for name, c in counts.items():
            band_counts[name.rsplit("_", 1)[1]] += c
        report.band_counts = band_counts
        report.band_frequencies = {
            band: (band_counts[band] / total_selected if total_selected else 0.0) for band in BAND_ORDER
        }
        electrode_counts = {ch: 0 for ch in EEG_CHANNELS_31}
        for selected in trial_selections:
            hit = {f.rsplit("_", 1)[0] for f in selected}
            for ch in hit:
                electrode_counts[ch] += 1
        report.electrode_counts = electrode_counts
    else:
        sensor_counts = {"GSR": 0, "Resp": 0, "Plet": 0, "Temp": 0}
        for name, c in counts.items():
            sensor_counts[name.split("_", 1)[0]] += c
        report.sensor_counts = sensor_counts
        report.sensor_frequencies = {
            s: (c / total_selected if total_selected else 0.0) for s, c in sensor_counts.items()
        }
    return report
