"""PhysioSet on-disk dataset format.

Layout: one directory per subject under the dataset root.

    <root>/<subject_id>/manifest.json
    <root>/<subject_id>/<channel>.f32     headerless raw float32 little-endian
    <root>/<subject_id>/markers.csv       start_s,end_s,kind,content,dynamic_range,stimulus_id
    <root>/<subject_id>/ratings.csv       subject_id,content,dynamic_range,q1,q2,q3,comp_q1,comp_q2

The writer is canonical (sorted JSON keys, fixed column order, shortest
round-trip float formatting, "\\n" newlines) so that save(load(x)) is
byte-identical for any valid set.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .model import (
    ChannelSpec,
    DatasetError,
    RatingRecord,
    Recording,
    StimulusMarker,
    validate_recording,
)

MANIFEST_NAME = "manifest.json"
MARKERS_NAME = "markers.csv"
RATINGS_NAME = "ratings.csv"

MARKER_COLUMNS = ("start_s", "end_s", "kind", "content", "dynamic_range", "stimulus_id")
RATING_COLUMNS = ("subject_id", "content", "dynamic_range", "q1", "q2", "q3", "comp_q1", "comp_q2")


def _subject_dirs(root: Path) -> list[Path]:
    if (root / MANIFEST_NAME).is_file():
        return [root]
    subdirs = sorted(p for p in root.iterdir() if p.is_dir() and (p / MANIFEST_NAME).is_file())
    return subdirs


def load_physioset(path: str | Path, strict: bool = True) -> tuple[list[Recording], list[RatingRecord]]:
    """Load and validate every subject under ``path``.

    With ``strict`` (the default) any invariant violation raises
    :class:`DatasetError`; with ``strict=False`` structural problems still
    raise but recordings with invariant violations are returned as-is (the
    caller is expected to run :func:`validate_recording` itself).
    """
    root = Path(path)
    if not root.is_dir():
        raise DatasetError(f"{root}: not a directory")
    subjects = _subject_dirs(root)
    if not subjects:
        raise DatasetError(f"{root}: manifest missing (no {MANIFEST_NAME} in directory or its subdirectories)")

    recordings: list[Recording] = []
    ratings: list[RatingRecord] = []
    for sdir in subjects:
        rec, rates = _load_subject(sdir)
        if strict:
            violations = validate_recording(rec)
            if violations:
                lines = "\n  ".join(str(v) for v in violations)
                raise DatasetError(f"{sdir / MANIFEST_NAME}: invalid recording:\n  {lines}")
        recordings.append(rec)
        ratings.extend(rates)
    return recordings, ratings


def _load_subject(sdir: Path) -> tuple[Recording, list[RatingRecord]]:
    mpath = sdir / MANIFEST_NAME
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as e:
        raise DatasetError(f"{mpath}: invalid JSON ({e})") from e

    for key in ("subject_id", "channels", "markers_file"):
        if key not in manifest:
            raise DatasetError(f"{mpath}: field {key!r} missing")

    channels: list[ChannelSpec] = []
    samples: dict[str, np.ndarray] = {}
    for i, ch in enumerate(manifest["channels"]):
        for key in ("name", "modality", "sample_rate", "file"):
            if key not in ch:
                raise DatasetError(f"{mpath}: channels[{i}] field {key!r} missing")
        spec = ChannelSpec(name=ch["name"], modality=ch["modality"], sample_rate=float(ch["sample_rate"]))
        fpath = sdir / ch["file"]
        if not fpath.is_file():
            raise DatasetError(f"{mpath}: channel {spec.name}: signal file {fpath} missing")
        raw = fpath.read_bytes()
        if len(raw) % 4 != 0:
            raise DatasetError(f"{fpath}: field data: size {len(raw)} not a multiple of 4 bytes")
        samples[spec.name] = np.frombuffer(raw, dtype="<f4").copy()
        channels.append(spec)

    markers = _load_markers(sdir / manifest["markers_file"])

    span_end = max((m.end_s for m in markers), default=0.0)
    for spec in channels:
        n = len(samples[spec.name])
        if n / spec.sample_rate + 1e-9 < span_end:
            raise DatasetError(
                f"{sdir / MANIFEST_NAME}: channel {spec.name}: file holds "
                f"{n} samples ({n / spec.sample_rate:.3f} s) but markers extend to {span_end:.3f} s"
            )

    ratings: list[RatingRecord] = []
    rfile = manifest.get("ratings_file")
    if rfile:
        rpath = sdir / rfile
        if rpath.is_file():
            ratings = load_ratings_csv(rpath)

    rec = Recording(subject_id=manifest["subject_id"], channels=channels, samples=samples, markers=markers)
    return rec, ratings


def _load_markers(path: Path) -> list[StimulusMarker]:
    if not path.is_file():
        raise DatasetError(f"{path}: markers file missing")
    markers = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != MARKER_COLUMNS:
            raise DatasetError(f"{path}: header must be {','.join(MARKER_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                markers.append(
                    StimulusMarker(
                        start_s=float(row["start_s"]),
                        end_s=float(row["end_s"]),
                        kind=row["kind"],
                        content=row["content"],
                        dynamic_range=row["dynamic_range"],
                        stimulus_id=row["stimulus_id"],
                    )
                )
            except (ValueError, KeyError) as e:
                raise DatasetError(f"{path}:{lineno}: bad marker row ({e})") from e
    return markers


def load_ratings_csv(path: str | Path) -> list[RatingRecord]:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"{path}: ratings file missing")
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != RATING_COLUMNS:
            raise DatasetError(f"{path}: header must be {','.join(RATING_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(
                    RatingRecord(
                        subject_id=row["subject_id"],
                        content=row["content"],
                        dynamic_range=row["dynamic_range"],
                        q1=int(row["q1"]),
                        q2=int(row["q2"]),
                        q3=int(row["q3"]),
                        comp_q1=int(row["comp_q1"]),
                        comp_q2=int(row["comp_q2"]),
                    )
                )
            except (ValueError, KeyError) as e:
                raise DatasetError(f"{path}:{lineno}: bad rating row ({e})") from e
    return records


def save_physioset(
    recordings: list[Recording],
    ratings: list[RatingRecord],
    path: str | Path,
) -> None:
    """Write a dataset in canonical form (see module docstring)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    by_subject: dict[str, list[RatingRecord]] = {}
    for r in ratings:
        by_subject.setdefault(r.subject_id, []).append(r)

    for rec in recordings:
        sdir = root / rec.subject_id
        sdir.mkdir(parents=True, exist_ok=True)
        manifest = {
            "subject_id": rec.subject_id,
            "channels": [
                {
                    "name": c.name,
                    "modality": c.modality,
                    "sample_rate": c.sample_rate,
                    "file": f"{c.name}.f32",
                }
                for c in rec.channels
            ],
            "markers_file": MARKERS_NAME,
            "ratings_file": RATINGS_NAME,
        }
        (sdir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        for c in rec.channels:
            (sdir / f"{c.name}.f32").write_bytes(
                np.ascontiguousarray(rec.samples[c.name], dtype="<f4").tobytes()
            )
        _write_markers(sdir / MARKERS_NAME, rec.markers)
        _write_ratings(sdir / RATINGS_NAME, by_subject.get(rec.subject_id, []))


def _write_markers(path: Path, markers: list[StimulusMarker]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MARKER_COLUMNS)
    for m in sorted(markers, key=lambda m: (m.start_s, m.end_s, m.stimulus_id)):
        w.writerow([repr(m.start_s), repr(m.end_s), m.kind, m.content, m.dynamic_range, m.stimulus_id])
    path.write_text(buf.getvalue())


def _write_ratings(path: Path, ratings: list[RatingRecord]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RATING_COLUMNS)
    for r in sorted(ratings, key=lambda r: (r.subject_id, r.content, r.dynamic_range)):
        w.writerow([r.subject_id, r.content, r.dynamic_range, r.q1, r.q2, r.q3, r.comp_q1, r.comp_q2])
    path.write_text(buf.getvalue())
