"""Signal conditioning: resample to 256 Hz, trim period edges, band-limit,
re-reference EEG to the vertex electrode, reject ocular artifacts, and cut
stimulus periods into 10 s segments paired with their baselines.

Filters are 4th-order Butterworth applied forward-backward (zero phase);
resampling is polyphase interpolation with a Kaiser-windowed sinc
(beta 8.6). Both choices are deterministic and alias-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from scipy import signal as sps

from .model import (
    DEFAULT_SAMPLE_RATE,
    PERIPHERAL_CHANNELS,
    REFERENCE_CHANNEL,
    Recording,
    Segment,
)
from .ica import IcaDecomposition, ica_artifact_reject


class PreprocessError(Exception):
    """A preprocessing operation received input it cannot handle."""


@dataclass(frozen=True)
class FilterSpec:
    """Butterworth band definition. ``low_hz`` is ignored for LOWPASS."""

    kind: str  # "BANDPASS" | "LOWPASS"
    low_hz: float
    high_hz: float
    order: int = 4
    zero_phase: bool = True

    def validate(self, sample_rate: float) -> None:
        nyquist = sample_rate / 2.0
        if self.kind not in ("BANDPASS", "LOWPASS"):
            raise PreprocessError(f"unknown filter kind {self.kind!r}")
        if self.order < 1:
            raise PreprocessError(f"filter order must be positive, got {self.order}")
        low = self.low_hz if self.kind == "BANDPASS" else 0.0
        if not 0.0 <= low < self.high_hz < nyquist:
            raise PreprocessError(
                f"filter edges ({self.low_hz}, {self.high_hz}) invalid for "
                f"Nyquist {nyquist} Hz"
            )


@dataclass
class PreprocessConfig:
    """Tunables for the preprocessing stage (config-file keys in comments)."""

    target_hz: float = DEFAULT_SAMPLE_RATE          # resample.target_hz
    eeg_band: tuple[float, float] = (2.0, 100.0)    # eeg.band
    resp_lowpass_hz: float = 10.0                   # resp.lowpass_hz
    ica_threshold: float = 0.6                      # ica.threshold (>1 disables ICA)
    ica_max_iter: int = 512                         # ica.max_iter
    ica_seed: int = 0                               # ica.seed
    trim_s: float = 1.0                             # trim_s (applied to baselines)
    segment_s: float = 10.0                         # segment_s


def resample(x: np.ndarray, source_hz: float, target_hz: float = DEFAULT_SAMPLE_RATE) -> np.ndarray:
    """Polyphase resampling; output length is round(len(x) * target/source)."""
    if source_hz < target_hz:
        raise PreprocessError(f"upsampling unsupported ({source_hz} -> {target_hz} Hz)")
    x = np.asarray(x, dtype=np.float64)
    if source_hz == target_hz:
        return x.copy()
    ratio = Fraction(target_hz / source_hz).limit_denominator(10000)
    out = sps.resample_poly(
        x, ratio.numerator, ratio.denominator, window=("kaiser", 8.6), padtype="line"
    )
    n_out = int(round(len(x) * target_hz / source_hz))
    return out[:n_out]


def trim_edges(x: np.ndarray, sample_rate: float, trim_s: float = 1.0) -> np.ndarray:
    """Drop ``trim_s`` seconds from both ends of a period."""
    x = np.asarray(x)
    duration = len(x) / sample_rate
    if duration <= 2 * trim_s:
        raise PreprocessError(f"period of {duration:.3f} s too short to trim {trim_s} s per edge")
    n = int(round(trim_s * sample_rate))
    return x[n: len(x) - n]


def bandpass(x: np.ndarray, spec: FilterSpec, sample_rate: float) -> np.ndarray:
    """Apply a Butterworth filter per ``spec`` (zero-phase by default)."""
    spec.validate(sample_rate)
    x = np.asarray(x, dtype=np.float64)
    if spec.kind == "BANDPASS":
        sos = sps.butter(spec.order, [spec.low_hz, spec.high_hz], btype="bandpass", fs=sample_rate, output="sos")
    else:
        sos = sps.butter(spec.order, spec.high_hz, btype="lowpass", fs=sample_rate, output="sos")
    if spec.zero_phase:
        return sps.sosfiltfilt(sos, x)
    return sps.sosfilt(sos, x)


def rereference_to_cz(eeg: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Subtract the Cz channel from every other channel and drop Cz."""
    if REFERENCE_CHANNEL not in eeg:
        raise PreprocessError(f"reference channel {REFERENCE_CHANNEL} absent")
    ref = np.asarray(eeg[REFERENCE_CHANNEL], dtype=np.float64)
    return {
        name: np.asarray(x, dtype=np.float64) - ref
        for name, x in eeg.items()
        if name != REFERENCE_CHANNEL
    }


def segment_recording(
    rec: Recording,
    segment_s: float = 10.0,
    baseline_trim_s: float = 1.0,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
) -> list[Segment]:
    """Cut each stimulus period into consecutive ``segment_s`` windows.

    Stimulus spans are segmented in full (a 280 s session yields 28
    segments); leftover tails shorter than one window are discarded.
    Baseline periods are trimmed by ``baseline_trim_s`` at each end before
    being attached to every segment of their stimulus.
    """
    segments: list[Segment] = []
    for m in rec.stimulus_markers():
        n_windows = int(math.floor(m.duration_s / segment_s + 1e-9))
        if n_windows < 1:
            raise PreprocessError(
                f"stimulus {m.stimulus_id} lasts {m.duration_s:.3f} s, shorter than one {segment_s} s segment"
            )
        base_marker = rec.baseline_for(m.stimulus_id)
        if base_marker is None:
            raise PreprocessError(f"stimulus {m.stimulus_id} has no bound baseline")
        baseline: dict[str, np.ndarray] = {}
        for name, x in rec.samples.items():
            b0 = int(round(base_marker.start_s * sample_rate))
            b1 = int(round(base_marker.end_s * sample_rate))
            baseline[name] = trim_edges(np.asarray(x)[b0:b1], sample_rate, baseline_trim_s)
        win = int(round(segment_s * sample_rate))
        start = int(round(m.start_s * sample_rate))
        for k in range(n_windows):
            sl = slice(start + k * win, start + (k + 1) * win)
            segments.append(
                Segment(
                    subject_id=rec.subject_id,
                    stimulus_id=m.stimulus_id,
                    window_index=k,
                    duration_s=segment_s,
                    sample_rate=sample_rate,
                    samples={name: np.asarray(x)[sl] for name, x in rec.samples.items()},
                    baseline=baseline,
                    labels={"dynamic_range": m.dynamic_range, "content": m.content},
                )
            )
    return segments


def preprocess_recording(
    rec: Recording, cfg: PreprocessConfig | None = None
) -> tuple[list[Segment], IcaDecomposition | None]:
    """Full conditioning pipeline for one recording.

    Steps: resample every channel to the target rate; band-limit EEG and EOG
    to the EEG band and respiration below its lowpass edge; re-reference EEG
    to Cz; reject EOG-correlated independent components; segment. Returns
    the segments (EEG channels re-referenced, EOG dropped) plus the ICA
    decomposition for audit (None when ICA was disabled or no EOG exists).
    """
    cfg = cfg or PreprocessConfig()
    fs = cfg.target_hz
    eeg_spec = FilterSpec("BANDPASS", cfg.eeg_band[0], cfg.eeg_band[1])
    resp_spec = FilterSpec("LOWPASS", 0.0, cfg.resp_lowpass_hz)

    work: dict[str, np.ndarray] = {}
    for spec in rec.channels:
        x = resample(rec.samples[spec.name], spec.sample_rate, fs)
        if spec.modality in ("EEG", "EOG"):
            x = bandpass(x, eeg_spec, fs)
        elif spec.modality == "RESP":
            x = bandpass(x, resp_spec, fs)
        work[spec.name] = x

    eeg_names = [c.name for c in rec.channels_of("EEG")]
    eog_names = [c.name for c in rec.channels_of("EOG")]
    eeg = rereference_to_cz({n: work[n] for n in eeg_names})

    decomposition: IcaDecomposition | None = None
    if eog_names and cfg.ica_threshold <= 1.0:
        eog = np.vstack([work[n] for n in eog_names])
        eeg, decomposition = ica_artifact_reject(
            eeg,
            eog,
            threshold=cfg.ica_threshold,
            max_iter=cfg.ica_max_iter,
            seed=cfg.ica_seed,
        )

    clean_samples = dict(eeg)
    for name in PERIPHERAL_CHANNELS:
        if name in work:
            clean_samples[name] = work[name]

    clean = Recording(
        subject_id=rec.subject_id,
        channels=[replace(c, sample_rate=fs) for c in rec.channels if c.name in clean_samples],
        samples=clean_samples,
        markers=rec.markers,
    )
    segments = segment_recording(clean, cfg.segment_s, cfg.trim_s, fs)
    return segments, decomposition
