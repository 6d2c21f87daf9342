"""Report output: canonical JSON, delimited summaries, and rendered figures.

Every evaluation run writes ``report.json``, ``summary.csv``,
``selection_eeg.csv``, ``selection_peri.csv`` and ``topography.csv`` plus
band/sensor summaries, and renders the matching matplotlib figures (accuracy
bars, band-frequency bars, a scalp topography map) next to them. The JSON
writer is canonical (sorted keys, fixed indentation), so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import EvaluationReport
from .model import BAND_ORDER, EEG_CHANNELS_31

# Approximate 10-20 positions on a unit head disk (x: left-right, y: nose up).
ELECTRODE_POS = {
    "Fp1": (-0.31, 0.95), "Fp2": (0.31, 0.95),
    "AF3": (-0.29, 0.78), "AF4": (0.29, 0.78),
    "F7": (-0.81, 0.59), "F3": (-0.39, 0.55), "Fz": (0.0, 0.52), "F4": (0.39, 0.55), "F8": (0.81, 0.59),
    "FC5": (-0.62, 0.28), "FC1": (-0.21, 0.26), "FC2": (0.21, 0.26), "FC6": (0.62, 0.28),
    "T7": (-1.0, 0.0), "C3": (-0.5, 0.0), "Cz": (0.0, 0.0), "C4": (0.5, 0.0), "T8": (1.0, 0.0),
    "CP5": (-0.62, -0.28), "CP1": (-0.21, -0.26), "CP2": (0.21, -0.26), "CP6": (0.62, -0.28),
    "P7": (-0.81, -0.59), "P3": (-0.39, -0.55), "Pz": (0.0, -0.52), "P4": (0.39, -0.55), "P8": (0.81, -0.59),
    "PO3": (-0.29, -0.78), "PO4": (0.29, -0.78),
    "O1": (-0.31, -0.95), "Oz": (0.0, -1.0), "O2": (0.31, -0.95),
}


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (int, float, np.floating)) else str(x)


def write_evaluation_report(report: EvaluationReport, out_dir: str | Path) -> list[Path]:
    """Write all report files; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    p = out / "report.json"
    p.write_text(canonical_json(report.to_dict()))
    written.append(p)

    metric_names = ("accuracy", "balanced_accuracy", "f_measure")
    header = ["subject", "modality"]
    for m in metric_names:
        header += [f"{m}_mean", f"{m}_std"]
    header.append("p_value_accuracy")
    rows = []
    for subject in report.subjects:
        vals = [r for r in report.per_subject_rep if r["subject"] == subject]
        row = [subject, report.modality]
        for m in metric_names:
            xs = [v[m] for v in vals]
            row += [_fmt(np.mean(xs)), _fmt(np.std(xs, ddof=1) if len(xs) > 1 else 0.0)]
        row.append("")
        rows.append(row)
    all_row = ["ALL", report.modality]
    for m in metric_names:
        all_row += [_fmt(report.summary[m]["mean"]), _fmt(report.summary[m]["std"])]
    all_row.append(_fmt(report.p_values["accuracy"]) if report.p_values.get("accuracy") is not None else "")
    rows.append(all_row)
    p = out / "summary.csv"
    _write_csv(p, header, rows)
    written.append(p)

    written += _write_selection_csvs(report, out)
    written += _render_figures(report, out)
    return written


def _write_selection_csvs(report: EvaluationReport, out: Path) -> list[Path]:
    written = []
    for name, sel in (("selection_eeg.csv", report.selection_eeg), ("selection_peri.csv", report.selection_peri)):
        rows = []
        if sel:
            for feature, count in sel["feature_counts"].items():
                rows.append([feature, count, _fmt(sel["feature_frequencies"][feature])])
        p = out / name
        _write_csv(p, ["feature", "count", "frequency"], rows)
        written.append(p)

    rows = []
    if report.selection_eeg:
        for band in BAND_ORDER:
            rows.append([
                band,
                report.selection_eeg["band_counts"][band],
                _fmt(report.selection_eeg["band_frequencies"][band]),
            ])
    p = out / "selection_bands_eeg.csv"
    _write_csv(p, ["band", "count", "frequency"], rows)
    written.append(p)

    rows = []
    if report.selection_peri:
        for sensor, count in report.selection_peri["sensor_counts"].items():
            rows.append([sensor, count, _fmt(report.selection_peri["sensor_frequencies"][sensor])])
    p = out / "selection_sensors_peri.csv"
    _write_csv(p, ["sensor", "count", "frequency"], rows)
    written.append(p)

    rows = []
    if report.selection_eeg:
        for ch in EEG_CHANNELS_31:
            rows.append([ch, report.selection_eeg["electrode_counts"][ch]])
    p = out / "topography.csv"
    _write_csv(p, ["electrode", "count"], rows)
    written.append(p)
    return written


def _render_figures(report: EvaluationReport, out: Path) -> list[Path]:
    written = []

    fig, ax = plt.subplots(figsize=(7, 3.5))
    labels = report.subjects + ["ALL"]
    means = []
    for subject in report.subjects:
        vals = [r["accuracy"] for r in report.per_subject_rep if r["subject"] == subject]
        means.append(float(np.mean(vals)))
    means.append(report.summary["accuracy"]["mean"])
    bars = ax.bar(labels, [100 * m for m in means], color=["#4878d0"] * len(report.subjects) + ["#d65f5f"])
    ax.axhline(50, color="gray", linestyle="--", linewidth=1)
    ax.set_ylabel("accuracy [%]")
    ax.set_ylim(0, 100)
    ax.set_title(f"{report.task} / {report.scenario} / {report.modality} "
                 f"({report.reps} repetitions)")
    ax.bar_label(bars, fmt="%.1f", fontsize=8)
    fig.tight_layout()
    p = out / "summary_accuracy.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)

    if report.selection_eeg:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        freqs = [report.selection_eeg["band_frequencies"][b] for b in BAND_ORDER]
        ax.bar(BAND_ORDER, freqs, color="#4878d0")
        ax.set_ylabel("relative selection frequency")
        ax.set_title("Selected EEG features by band")
        fig.tight_layout()
        p = out / "selection_bands_eeg.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        written.append(p)

        fig, ax = plt.subplots(figsize=(5, 5))
        counts = report.selection_eeg["electrode_counts"]
        xs = [ELECTRODE_POS[ch][0] for ch in EEG_CHANNELS_31]
        ys = [ELECTRODE_POS[ch][1] for ch in EEG_CHANNELS_31]
        cs = [counts[ch] for ch in EEG_CHANNELS_31]
        head = plt.Circle((0, 0), 1.08, fill=False, color="black", linewidth=1.5)
        ax.add_patch(head)
        ax.plot([0.0, -0.09, 0.09, 0.0], [1.2, 1.07, 1.07, 1.2], color="black", linewidth=1.5)
        sc = ax.scatter(xs, ys, c=cs, s=320, cmap="jet", vmin=0,
                        vmax=max(max(cs), 1), edgecolors="black", zorder=3)
        for ch in EEG_CHANNELS_31:
            ax.annotate(ch, ELECTRODE_POS[ch], ha="center", va="center", fontsize=6, zorder=4)
        fig.colorbar(sc, ax=ax, label="trials selecting the electrode")
        ax.set_xlim(-1.35, 1.35)
        ax.set_ylim(-1.3, 1.35)
        ax.set_aspect("equal")
        ax.axis("off")
        ax.set_title("Feature selection topography")
        fig.tight_layout()
        p = out / "topography.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        written.append(p)

    if report.selection_peri:
        fig, ax = plt.subplots(figsize=(7, 3.5))
        names = list(report.selection_peri["feature_frequencies"])
        freqs = [report.selection_peri["feature_frequencies"][n] for n in names]
        ax.bar(names, freqs, color="#4878d0")
        ax.set_ylabel("selection frequency")
        ax.set_title("Selected peripheral features")
        ax.tick_params(axis="x", rotation=60, labelsize=8)
        fig.tight_layout()
        p = out / "selection_peri.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        written.append(p)

    return written


def write_ratings_report(result: dict, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    p = out / "ratings_report.json"
    p.write_text(canonical_json(result))
    written.append(p)

    rows = []
    for q, cell in result["single_stimulus"].items():
        rows.append([
            q,
            cell["ldr"]["n"], _fmt(cell["ldr"]["mean"]), _fmt(cell["ldr"]["std"]),
            cell["tmhdr"]["n"], _fmt(cell["tmhdr"]["mean"]), _fmt(cell["tmhdr"]["std"]),
            _fmt(cell["p"]),
        ])
    p = out / "ratings_single_stimulus.csv"
    _write_csv(p, ["question", "ldr_n", "ldr_mean", "ldr_std", "tmhdr_n", "tmhdr_mean", "tmhdr_std", "p_value"], rows)
    written.append(p)

    rows = [[pair, "" if v is None else _fmt(v)] for pair, v in result["question_pcc"].items()]
    p = out / "ratings_pcc.csv"
    _write_csv(p, ["questions", "pcc"], rows)
    written.append(p)

    pc = result["paired_comparison"]
    p = out / "ratings_paired.csv"
    _write_csv(
        p,
        ["n_pairs", "comp_q1_mean", "comp_q2_mean", "pcc"],
        [[pc["n_pairs"], _fmt(pc["comp_q1_mean"]), _fmt(pc["comp_q2_mean"]),
          "" if pc["pcc"] is None else _fmt(pc["pcc"])]],
    )
    written.append(p)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    qs = list(result["single_stimulus"])
    x = np.arange(len(qs))
    ldr = [result["single_stimulus"][q]["ldr"]["mean"] for q in qs]
    hdr = [result["single_stimulus"][q]["tmhdr"]["mean"] for q in qs]
    lstd = [result["single_stimulus"][q]["ldr"]["std"] for q in qs]
    hstd = [result["single_stimulus"][q]["tmhdr"]["std"] for q in qs]
    ax.bar(x - 0.2, ldr, width=0.4, yerr=lstd, capsize=3, label="LDR", color="#4878d0")
    ax.bar(x + 0.2, hdr, width=0.4, yerr=hstd, capsize=3, label="tone-mapped HDR", color="#d65f5f")
    for i, q in enumerate(qs):
        ax.text(i, 0.4, f"p={result['single_stimulus'][q]['p']:.4f}", ha="center", fontsize=8)
    ax.set_xticks(x, qs)
    ax.set_ylabel("score (1..9)")
    ax.set_ylim(0, 9.5)
    ax.legend(fontsize=8)
    ax.set_title("Single-stimulus ratings")
    fig.tight_layout()
    p = out / "ratings_summary.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)
    return written
