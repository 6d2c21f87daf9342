"""Feature extraction: EEG band powers and peripheral signal statistics.

EEG: Welch power spectral density per channel (Hann window, 256-sample
segments, 50% overlap, density scaling so that the 1 Hz-grid bin sum equals
signal variance), band powers for theta/alpha/beta/gamma, baseline power
subtracted in linear units. 31 electrodes x 4 bands = 124 features.

Peripheral: mean/spread statistics of GSR, respiration, plethysmography and
skin temperature. Derivatives are first differences scaled by the sample
rate (units per second). Pulse peaks come from adaptive thresholding of the
band-limited, differentiated, squared plethysmograph (moving-window
integrated), with a 250 ms refractory period. 13 features in fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .model import (
    EEG_CHANNELS_31,
    EEG_FEATURE_NAMES,
    PERIPHERAL_FEATURE_NAMES,
    BAND_ORDER,
    FeatureVector,
    Segment,
)


class FeatureError(Exception):
    """Feature extraction received input outside its contract."""


@dataclass(frozen=True)
class BandDef:
    name: str
    low_hz: float
    high_hz: float


BANDS = {
    "theta": BandDef("theta", 3.0, 7.0),
    "alpha": BandDef("alpha", 8.0, 13.0),
    "beta": BandDef("beta", 14.0, 29.0),
    "gamma": BandDef("gamma", 30.0, 47.0),
}


@dataclass
class Psd:
    """One-sided power spectral density on a uniform frequency grid."""

    frequencies: np.ndarray
    power: np.ndarray


def welch_psd(
    x: np.ndarray,
    sample_rate: float = 256.0,
    window_len: int = 256,
    overlap_fraction: float = 0.5,
) -> Psd:
    """Hann-windowed averaged periodogram (density scaling)."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) < window_len:
        raise FeatureError(f"signal of {len(x)} samples shorter than one {window_len}-sample window")
    freqs, power = sps.welch(
        x,
        fs=sample_rate,
        window="hann",
        nperseg=window_len,
        noverlap=int(window_len * overlap_fraction),
        detrend="constant",
        scaling="density",
    )
    return Psd(frequencies=freqs, power=power)


def band_power(psd: Psd, band: BandDef) -> float:
    """Integrated PSD over ``low_hz <= f <= high_hz`` (inclusive ends)."""
    f = psd.frequencies
    if band.low_hz < f[0] or band.high_hz > f[-1]:
        raise FeatureError(f"band {band.name} [{band.low_hz}, {band.high_hz}] outside PSD range [{f[0]}, {f[-1]}]")
    df = f[1] - f[0]
    mask = (f >= band.low_hz - 1e-9) & (f <= band.high_hz + 1e-9)
    return float(psd.power[mask].sum() * df)


def _band_powers(x: np.ndarray, sample_rate: float) -> dict[str, float]:
    psd = welch_psd(x, sample_rate)
    return {name: band_power(psd, BANDS[name]) for name in BAND_ORDER}


def eeg_features(segment: Segment) -> FeatureVector:
    """124 baseline-corrected band powers in canonical electrode/band order."""
    present = set(segment.samples)
    missing = [ch for ch in EEG_CHANNELS_31 if ch not in present]
    if missing:
        raise FeatureError(f"segment lacks re-referenced EEG channels: {missing}")
    if not segment.baseline:
        raise FeatureError("segment has no baseline signals")
    values = np.empty(len(EEG_FEATURE_NAMES))
    i = 0
    for ch in EEG_CHANNELS_31:
        if ch not in segment.baseline:
            raise FeatureError(f"segment baseline lacks channel {ch}")
        stim = _band_powers(segment.samples[ch], segment.sample_rate)
        base = _band_powers(segment.baseline[ch], segment.sample_rate)
        for band in BAND_ORDER:
            values[i] = stim[band] - base[band]
            i += 1
    return FeatureVector(
        modality="EEG",
        names=EEG_FEATURE_NAMES,
        values=values,
        subject_id=segment.subject_id,
        stimulus_id=segment.stimulus_id,
        window_index=segment.window_index,
    )


def _derivative(x: np.ndarray, sample_rate: float) -> np.ndarray:
    return np.diff(x) * sample_rate


def _std(x: np.ndarray) -> float:
    # Unbiased; a single value has no spread, reported as 0.
    return float(np.std(x, ddof=1)) if len(x) >= 2 else 0.0


def gsr_features(x: np.ndarray, sample_rate: float) -> tuple[float, float, float, float]:
    """(mean, std, derivative mean, derivative std)."""
    x = np.asarray(x, dtype=np.float64)
    d = _derivative(x, sample_rate)
    return float(np.mean(x)), _std(x), float(np.mean(d)), _std(d)


def resp_features(x: np.ndarray, sample_rate: float) -> tuple[float, float, float]:
    """(derivative mean, std, mean peak-to-peak time between inhalation peaks).

    Inhalation peaks are local maxima above the segment median, at least one
    second apart (breathing stays below 60 breaths/min).
    """
    x = np.asarray(x, dtype=np.float64)
    peaks, _ = sps.find_peaks(x, height=float(np.median(x)), distance=max(int(sample_rate * 1.0), 1))
    if len(peaks) < 2:
        raise FeatureError(f"found {len(peaks)} respiration peaks, need at least 2")
    ptp = np.diff(peaks) / sample_rate
    d = _derivative(x, sample_rate)
    return float(np.mean(d)), _std(x), float(np.mean(ptp))


def detect_pulses(x: np.ndarray, sample_rate: float) -> np.ndarray:
    """Pulse peak indices via adaptive thresholding of the band-limited,
    differentiated, squared and window-integrated plethysmograph."""
    x = np.asarray(x, dtype=np.float64)
    nyq = sample_rate / 2.0
    sos = sps.butter(2, [0.7 / nyq, min(8.0, 0.9 * nyq) / nyq], btype="bandpass", output="sos")
    filt = sps.sosfiltfilt(sos, x)
    squared = np.diff(filt) ** 2
    win = max(int(0.15 * sample_rate), 1)
    integrated = np.convolve(squared, np.ones(win) / win, mode="same")

    refractory = max(int(0.25 * sample_rate), 1)
    candidates, _ = sps.find_peaks(integrated, distance=refractory)
    if len(candidates) == 0:
        return np.array([], dtype=int)

    # Running signal/noise levels in the style of the classic QRS detector.
    signal_level = float(np.max(integrated[: int(2 * sample_rate)])) if len(integrated) else 0.0
    noise_level = float(np.mean(integrated[: int(2 * sample_rate)])) if len(integrated) else 0.0
    thresh = noise_level + 0.25 * (signal_level - noise_level)
    peaks = []
    for c in candidates:
        v = integrated[c]
        if v > thresh:
            peaks.append(c)
            signal_level = 0.125 * v + 0.875 * signal_level
        else:
            noise_level = 0.125 * v + 0.875 * noise_level
        thresh = noise_level + 0.25 * (signal_level - noise_level)
    return np.asarray(peaks, dtype=int)


def pleth_features(x: np.ndarray, sample_rate: float) -> tuple[float, float, float, float]:
    """(HR mean, HR std, HRV mean, HRV std) in bpm.

    The heart-rate series is 60 / inter-beat-interval; HRV is the series of
    successive HR differences. Spread statistics of degenerate (length < 2)
    series are reported as 0.
    """
    peaks = detect_pulses(x, sample_rate)
    if len(peaks) < 2:
        raise FeatureError(f"found {len(peaks)} pulse peaks, need at least 2")
    ibi = np.diff(peaks) / sample_rate
    hr = 60.0 / ibi
    hrv = np.diff(hr)
    hrv_mean = float(np.mean(hrv)) if len(hrv) else 0.0
    return float(np.mean(hr)), _std(hr), hrv_mean, _std(hrv)


def temp_features(x: np.ndarray, sample_rate: float) -> tuple[float, float]:
    """(mean, derivative mean)."""
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x)), float(np.mean(_derivative(x, sample_rate)))


def peripheral_features(segment: Segment) -> FeatureVector:
    """13 peripheral features in fixed table order."""
    for name in ("GSR", "RESP", "PLETH", "TEMP"):
        if name not in segment.samples:
            raise FeatureError(f"segment lacks channel {name}")
    fs = segment.sample_rate
    gsr = gsr_features(segment.samples["GSR"], fs)
    resp = resp_features(segment.samples["RESP"], fs)
    pleth = pleth_features(segment.samples["PLETH"], fs)
    temp = temp_features(segment.samples["TEMP"], fs)
    values = np.array([*gsr, *resp, *pleth, *temp])
    return FeatureVector(
        modality="PERIPHERAL",
        names=PERIPHERAL_FEATURE_NAMES,
        values=values,
        subject_id=segment.subject_id,
        stimulus_id=segment.stimulus_id,
        window_index=segment.window_index,
    )


def features_to_csv_rows(vectors: list[FeatureVector]) -> tuple[list[str], list[list]]:
    """Header + rows for the CSV export (one row per segment)."""
    if not vectors:
        return [], []
    names = list(vectors[0].names)
    header = ["subject_id", "stimulus_id", "window_index"] + names
    rows = []
    for v in vectors:
        if list(v.names) != names:
            raise FeatureError("mixed feature orders in one export")
        rows.append([v.subject_id, v.stimulus_id, v.window_index] + [repr(float(x)) for x in v.values])
    return header, rows
