"""Command-line entry point.

Subcommands: ``validate``, ``synth``, ``extract``, ``evaluate``,
``ratings``. Exit codes: 0 success, 1 runtime failure, 2 input-validation
failure. All outputs are deterministic for a fixed configuration and seed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

from . import evaluate as ev
from . import report as rp
from . import synth
from .config import ConfigError, load_config
from .features import features_to_csv_rows, eeg_features, peripheral_features
from .model import DatasetError, validate_recording
from .physioset import load_physioset, load_ratings_csv
from .preprocess import preprocess_recording
from .ratings import RatingsError, ratings_report


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="physioqoe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a PhysioSet against all invariants")
    p.add_argument("path", type=Path)

    p = sub.add_parser("synth", help="generate a synthetic PhysioSet with ground truth")
    p.add_argument("spec", type=Path, nargs="?", help="generator spec JSON (defaults when omitted)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")

    p = sub.add_parser("extract", help="preprocess a dataset and export feature CSVs")
    p.add_argument("path", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("evaluate", help="run a classification protocol and write reports")
    p.add_argument("path", type=Path)
    p.add_argument("--task", choices=("hdr", "q1", "q3"), required=True)
    p.add_argument("--scenario", choices=("dep", "indep"), required=True)
    p.add_argument("--modality", choices=("eeg", "peri", "fusion"), required=True)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("ratings", help="compute subjective-rating statistics")
    p.add_argument("path", type=Path, help="dataset directory or a ratings.csv file")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--config", type=Path, default=None)
    return parser


def _cmd_validate(args) -> int:
    try:
        recordings, _ = load_physioset(args.path, strict=False)
    except DatasetError as e:
        print(f"INVALID: {e}")
        return 2
    violations = []
    for rec in recordings:
        violations.extend(validate_recording(rec))
    if violations:
        for v in violations:
            print(f"VIOLATION {v}")
        print(f"INVALID: {len(violations)} violation(s) in {len(recordings)} recording(s)")
        return 2
    print(f"OK: {len(recordings)} recording(s) valid")
    return 0


def _spec_from_json(path: Path | None, seed_override: int | None) -> synth.GeneratorSpec:
    if path is None:
        data = {}
    else:
        data = json.loads(path.read_text())
    effect = synth.EffectSpec(**{k: tuple(v) if isinstance(v, list) else v
                                 for k, v in data.pop("effect", {}).items()})
    overrides = tuple(
        (int(idx), synth.EffectSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in eff.items()}))
        for idx, eff in data.pop("subject_effects", [])
    )
    if "layout" in data:
        data["layout"] = tuple((c, float(d)) for c, d in data["layout"])
    if "band_powers" in data:
        data["band_powers"] = tuple((b, float(p)) for b, p in data["band_powers"])
    spec = synth.GeneratorSpec(effect=effect, subject_effects=overrides, **data)
    if seed_override is not None:
        from dataclasses import replace

        spec = replace(spec, seed=seed_override)
    return spec


def _dataset_checksum(root: Path) -> str:
    h = hashlib.sha256()
    for f in sorted(root.rglob("*")):
        if f.is_file():
            h.update(str(f.relative_to(root)).encode())
            h.update(f.read_bytes())
    return h.hexdigest()


def _cmd_synth(args) -> int:
    spec = _spec_from_json(args.spec, args.seed)
    synth.write_dataset(spec, args.out)
    checksum = _dataset_checksum(args.out)
    print(f"seed {spec.seed}")
    print(f"checksum {checksum}")
    print(f"wrote {args.out} ({spec.n_subjects} subject(s))")
    return 0


def _cmd_extract(args) -> int:
    cfg = load_config(args.config)
    recordings, _ = load_physioset(args.path)
    args.out.mkdir(parents=True, exist_ok=True)
    eeg_vecs, peri_vecs = [], []
    for rec in sorted(recordings, key=lambda r: r.subject_id):
        segments, _ = preprocess_recording(rec, cfg.preprocess_config())
        eeg_vecs.extend(eeg_features(s) for s in segments)
        peri_vecs.extend(peripheral_features(s) for s in segments)
    for name, vecs in (("features_eeg.csv", eeg_vecs), ("features_peri.csv", peri_vecs)):
        header, rows = features_to_csv_rows(vecs)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        (args.out / name).write_text(buf.getvalue())
        print(f"wrote {args.out / name} ({len(rows)} segments)")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    recordings, ratings = load_physioset(args.path)
    bundle = ev.build_feature_bundle(recordings, ratings, cfg.preprocess_config(), jobs=args.jobs)
    task = ev.TaskSpec(task=args.task)
    runner = ev.run_subject_dependent if args.scenario == "dep" else ev.run_subject_independent
    report = runner(
        bundle,
        task,
        modality=args.modality,
        reps=args.reps,
        seed=args.seed,
        harness=cfg.harness_config(),
        jobs=args.jobs,
    )
    report.config = {
        **cfg.to_dict(),
        "task": args.task,
        "scenario": args.scenario,
        "modality": args.modality,
        "reps": args.reps,
        "seed": args.seed,
        "jobs": args.jobs,
    }
    written = rp.write_evaluation_report(report, args.out)
    for p in written:
        print(f"wrote {p}")
    print(f"\ntask={report.task} scenario={report.scenario} modality={report.modality}")
    for metric in ("accuracy", "balanced_accuracy", "f_measure"):
        s = report.summary[metric]
        pv = report.p_values.get(metric)
        pv_text = f" p={pv:.4g}" if pv is not None else ""
        print(f"  {metric}: {100 * s['mean']:.2f}% +/- {100 * s['std']:.2f}%{pv_text}")
    return 0


def _cmd_ratings(args) -> int:
    cfg = load_config(args.config)
    path = Path(args.path)
    if path.is_file():
        records = load_ratings_csv(path)
    else:
        _, records = load_physioset(path)
    if not records:
        raise DatasetError(f"{path}: no rating records found")
    result = ratings_report(records, pooled=cfg.ratings_pooled_t)
    written = rp.write_ratings_report(result, args.out)
    for p in written:
        print(f"wrote {p}")
    for q, cell in result["single_stimulus"].items():
        print(
            f"{q}: LDR {cell['ldr']['mean']:.2f}+/-{cell['ldr']['std']:.2f} "
            f"TMHDR {cell['tmhdr']['mean']:.2f}+/-{cell['tmhdr']['std']:.2f} p={cell['p']:.4f}"
        )
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "validate": _cmd_validate,
        "synth": _cmd_synth,
        "extract": _cmd_extract,
        "evaluate": _cmd_evaluate,
        "ratings": _cmd_ratings,
    }
    try:
        return handlers[args.command](args)
    except (DatasetError, ConfigError, synth.SynthError, RatingsError, ev.EvaluationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"runtime failure: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
