"""Domain types, electrode montage, canonical feature orders, and validation.

All other modules build on the types here. Validation is "violations as
data": :func:`validate_recording` returns a list of machine-readable
:class:`Violation` records instead of raising, so callers can report every
problem at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Channel modalities and marker vocabulary. Plain strings keep the CSV / JSON
# round trip trivial; the frozensets are the single source of truth.
MODALITIES = frozenset({"EEG", "EOG", "GSR", "PLETH", "RESP", "TEMP"})
MARKER_KINDS = frozenset({"BASELINE", "STIMULUS"})
CONTENTS = frozenset({"hall", "objects", "sky", "window"})
DYNAMIC_RANGES = frozenset({"LDR", "TMHDR"})

# 32-channel cap in acquisition order (vertex Cz is the reference electrode).
EEG_CHANNELS_32 = (
    "Fp1", "AF3", "F7", "F3", "FC1", "FC5", "T7", "C3",
    "CP1", "CP5", "P7", "P3", "Pz", "PO3", "O1", "Oz",
    "O2", "PO4", "P4", "P8", "CP6", "CP2", "C4", "T8",
    "FC6", "FC2", "F4", "F8", "AF4", "Fp2", "Fz", "Cz",
)
REFERENCE_CHANNEL = "Cz"

# Canonical electrode order for feature vectors: the 31 non-reference
# electrodes, case-insensitive alphabetical. This ordering is a convention of
# this artifact (the montage itself fixes only the electrode set), documented
# here so vectors are reproducible across runs and implementations.
EEG_CHANNELS_31 = tuple(
    sorted((c for c in EEG_CHANNELS_32 if c != REFERENCE_CHANNEL), key=str.lower)
)

BAND_ORDER = ("theta", "alpha", "beta", "gamma")

# EEG feature names: electrode-major, band-minor. 31 x 4 = 124 entries.
EEG_FEATURE_NAMES = tuple(
    f"{ch}_{band}" for ch in EEG_CHANNELS_31 for band in BAND_ORDER
)

# Peripheral feature names in fixed table order. 13 entries.
PERIPHERAL_FEATURE_NAMES = (
    "GSR_M", "GSR_Std", "GSR_derM", "GSR_derStd",
    "Resp_derM", "Resp_Std", "Resp_peaktM",
    "Plet_HRM", "Plet_HRStd", "Plet_HRVM", "Plet_HRVStd",
    "Temp_M", "Temp_derM",
)

PERIPHERAL_CHANNELS = ("GSR", "RESP", "PLETH", "TEMP")
EOG_CHANNEL_COUNT = 4

DEFAULT_SAMPLE_RATE = 256.0
BASELINE_DURATION_S = 10.0
SEGMENT_DURATION_S = 10.0


class DatasetError(Exception):
    """A dataset could not be loaded or fails its invariants."""


@dataclass(frozen=True)
class ChannelSpec:
    """One recorded channel: electrode or sensor name, modality, rate in Hz."""

    name: str
    modality: str
    sample_rate: float


@dataclass(frozen=True)
class StimulusMarker:
    """A labeled time span within a recording.

    BASELINE markers carry the ``stimulus_id`` of the stimulus they precede,
    binding the gray-screen period to it.
    """

    start_s: float
    end_s: float
    kind: str
    content: str
    dynamic_range: str
    stimulus_id: str

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass
class Recording:
    """One subject session: channel metadata, raw samples, and markers.

    ``samples`` maps channel name to a float32 array; arrays are kept in the
    on-disk dtype so that save(load(x)) is bit-exact.
    """

    subject_id: str
    channels: list[ChannelSpec]
    samples: dict[str, np.ndarray]
    markers: list[StimulusMarker]

    def channels_of(self, modality: str) -> list[ChannelSpec]:
        return [c for c in self.channels if c.modality == modality]

    def stimulus_markers(self) -> list[StimulusMarker]:
        return sorted(
            (m for m in self.markers if m.kind == "STIMULUS"),
            key=lambda m: m.start_s,
        )

    def baseline_for(self, stimulus_id: str) -> StimulusMarker | None:
        for m in self.markers:
            if m.kind == "BASELINE" and m.stimulus_id == stimulus_id:
                return m
        return None


@dataclass
class Segment:
    """A 10 s analysis window paired with its (trimmed) baseline window."""

    subject_id: str
    stimulus_id: str
    window_index: int
    duration_s: float
    sample_rate: float
    samples: dict[str, np.ndarray]
    baseline: dict[str, np.ndarray]
    labels: dict[str, str]  # keys: dynamic_range, content


@dataclass
class FeatureVector:
    """Ordered, named feature values for one segment and one modality."""

    modality: str  # "EEG" or "PERIPHERAL"
    names: tuple[str, ...]
    values: np.ndarray
    subject_id: str
    stimulus_id: str
    window_index: int

    def __post_init__(self) -> None:
        expected = EEG_FEATURE_NAMES if self.modality == "EEG" else PERIPHERAL_FEATURE_NAMES
        if self.names != expected:
            raise ValueError(
                f"{self.modality} feature vector must use the canonical "
                f"{len(expected)}-entry order, got {len(self.names)} entries"
            )
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(expected),):
            raise ValueError(f"expected {len(expected)} values, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            bad = [self.names[i] for i in np.flatnonzero(~np.isfinite(self.values))]
            raise ValueError(f"non-finite feature values: {bad}")


@dataclass(frozen=True)
class RatingRecord:
    """Subjective ratings for one (subject, content, dynamic range) stimulus.

    ``comp_q1``/``comp_q2`` belong to the content pair; positive values mean
    the tone-mapped HDR version was preferred.
    """

    subject_id: str
    content: str
    dynamic_range: str
    q1: int
    q2: int
    q3: int
    comp_q1: int
    comp_q2: int

    def __post_init__(self) -> None:
        for name in ("q1", "q2", "q3"):
            v = getattr(self, name)
            if not 1 <= v <= 9:
                raise ValueError(f"{name}={v} outside 1..9")
        for name in ("comp_q1", "comp_q2"):
            v = getattr(self, name)
            if not -3 <= v <= 3:
                raise ValueError(f"{name}={v} outside -3..3")


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion counts; class A first.

    ``false_a`` are class-A examples predicted B, ``false_b`` class-B
    examples predicted A. Class sizes are ``true_a + false_a`` and
    ``true_b + false_b``.
    """

    true_a: int
    false_a: int
    true_b: int
    false_b: int

    def __post_init__(self) -> None:
        for name in ("true_a", "false_a", "true_b", "false_b"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def number_of_a(self) -> int:
        return self.true_a + self.false_a

    @property
    def number_of_b(self) -> int:
        return self.true_b + self.false_b


@dataclass(frozen=True)
class Violation:
    """One failed invariant: a stable code plus human-readable detail."""

    code: str
    message: str
    subject_id: str = ""

    def __str__(self) -> str:
        prefix = f"[{self.subject_id}] " if self.subject_id else ""
        return f"{prefix}{self.code}: {self.message}"


def validate_recording(rec: Recording) -> list[Violation]:
    """Check every type invariant of a recording; empty list means valid."""
    out: list[Violation] = []
    sid = rec.subject_id

    def bad(code: str, message: str) -> None:
        out.append(Violation(code, message, sid))

    if not rec.subject_id:
        bad("SUBJECT_EMPTY", "subject_id is empty")

    names = [c.name for c in rec.channels]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        bad("CHANNEL_DUP", f"duplicate channel names: {dupes}")

    for c in rec.channels:
        if c.sample_rate <= 0:
            bad("SAMPLE_RATE", f"channel {c.name}: sample_rate {c.sample_rate} <= 0")
        if c.modality not in MODALITIES:
            bad("MODALITY", f"channel {c.name}: unknown modality {c.modality!r}")
        if c.name not in rec.samples:
            bad("CHANNEL_DATA", f"channel {c.name}: no sample data")

    eeg_names = {c.name for c in rec.channels_of("EEG")}
    if eeg_names and not eeg_names.issubset(set(EEG_CHANNELS_32)):
        unknown = sorted(eeg_names - set(EEG_CHANNELS_32))
        bad("EEG_MONTAGE", f"EEG channels outside the 32-electrode montage: {unknown}")
    n_eog = len(rec.channels_of("EOG"))
    if n_eog not in (0, EOG_CHANNEL_COUNT):
        bad("EOG_COUNT", f"expected {EOG_CHANNEL_COUNT} EOG channels, found {n_eog}")

    markers = sorted(rec.markers, key=lambda m: (m.start_s, m.end_s))
    for m in markers:
        if m.end_s <= m.start_s:
            bad("MARKER_SPAN", f"marker {m.stimulus_id}/{m.kind}: end {m.end_s} <= start {m.start_s}")
        if m.kind not in MARKER_KINDS:
            bad("MARKER_KIND", f"marker {m.stimulus_id}: unknown kind {m.kind!r}")
        if m.content not in CONTENTS:
            bad("MARKER_CONTENT", f"marker {m.stimulus_id}: unknown content {m.content!r}")
        if m.dynamic_range not in DYNAMIC_RANGES:
            bad("MARKER_RANGE", f"marker {m.stimulus_id}: unknown dynamic_range {m.dynamic_range!r}")
        if m.kind == "BASELINE" and abs(m.duration_s - BASELINE_DURATION_S) > 1e-9:
            bad("BASELINE_DURATION", f"baseline for {m.stimulus_id} lasts {m.duration_s} s, expected {BASELINE_DURATION_S}")

    for prev, cur in zip(markers, markers[1:]):
        if cur.start_s < prev.end_s - 1e-9:
            bad("MARKER_OVERLAP", f"markers {prev.stimulus_id}/{prev.kind} and {cur.stimulus_id}/{cur.kind} overlap")

    for m in rec.stimulus_markers():
        base = rec.baseline_for(m.stimulus_id)
        if base is None:
            bad("BASELINE_MISSING", f"stimulus {m.stimulus_id} has no bound baseline marker")
        elif base.end_s > m.start_s + 1e-9:
            bad("BASELINE_ORDER", f"baseline for {m.stimulus_id} does not precede the stimulus")

    if rec.markers:
        span_end = max(m.end_s for m in rec.markers)
        for c in rec.channels:
            data = rec.samples.get(c.name)
            if data is None:
                continue
            covered = len(data) / c.sample_rate
            if covered + 1e-9 < span_end:
                bad(
                    "SIGNAL_LENGTH",
                    f"channel {c.name} covers {covered:.3f} s but markers extend to {span_end:.3f} s",
                )

    return out
