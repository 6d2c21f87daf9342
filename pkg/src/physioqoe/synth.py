"""Synthetic PhysioSet generator with analytic ground truth.

EEG channels are sums of band-limited Gaussian noise components (shaped by
the same zero-phase Butterworth filters the preprocessing stage uses, so
generator bands and pipeline bands coincide), a broadband white noise
floor, and a shared stereotyped blink artifact injected into the frontal
electrodes and the EOG channels. Class effects scale selected band powers
on selected electrodes for tone-mapped HDR stimuli. Peripheral channels
come from parametric models: drifting GSR, 0.25 Hz sinusoidal breathing, a
pulse train at a configurable heart rate, and a linear temperature ramp.

Two constructions keep the class-irrelevant structure of the data flat:
the reference electrode is emitted as an all-zero channel (a
reference-subtracted acquisition), and baseline periods are scaled so that
their measured Welch band powers equal the target exactly on the trimmed
window. Without the second, the sampling noise of each shared baseline
estimate becomes a per-stimulus signature that a classifier can exploit,
and a zero-effect dataset stops behaving like chance.

Every signal is a pure function of (spec, seed); the ground-truth manifest
records the analytic feature values the oracle can compute, keyed by
stimulus, so downstream measurements can be checked without human data.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .features import BANDS, band_power, welch_psd
from .model import (
    BAND_ORDER,
    EEG_CHANNELS_31,
    EEG_CHANNELS_32,
    RatingRecord,
    Recording,
    ChannelSpec,
    StimulusMarker,
)
from .physioset import save_physioset

SAMPLE_RATE = 256.0

DEFAULT_BAND_POWERS = {"theta": 2.0, "alpha": 1.5, "beta": 1.0, "gamma": 0.5}

# Blink projection strengths onto frontal electrodes.
BLINK_TOPOGRAPHY = {
    "Fp1": 1.0, "Fp2": 1.0, "AF3": 0.8, "AF4": 0.8,
    "F7": 0.5, "F8": 0.5, "F3": 0.4, "F4": 0.4, "Fz": 0.4,
}
EOG_CHANNEL_GAINS = {"EOG1": 1.0, "EOG2": 0.9, "EOG3": -0.8, "EOG4": 0.7}

DEFAULT_LAYOUT = (("hall", 40.0), ("objects", 50.0), ("sky", 30.0), ("window", 20.0))


class SynthError(Exception):
    pass


@dataclass(frozen=True)
class EffectSpec:
    """Class-dependent differences between TMHDR and LDR stimuli."""

    bands: tuple[str, ...] = ("gamma",)
    electrodes: tuple[str, ...] = ("O1", "O2", "Oz", "PO3", "PO4", "P3", "P4", "Pz")
    power_ratio_db: float = 0.0
    hr_offset_bpm: float = 0.0
    gsr_slope_delta: float = 0.0
    temp_slope_delta: float = 0.0

    def validate(self) -> None:
        if not np.isfinite(self.power_ratio_db):
            raise SynthError("power ratio must be finite")
        bad = set(self.bands) - set(BAND_ORDER)
        if bad:
            raise SynthError(f"unknown bands {sorted(bad)}")
        bad = set(self.electrodes) - set(EEG_CHANNELS_31)
        if bad:
            raise SynthError(f"effect electrodes outside the non-reference montage: {sorted(bad)}")

    @property
    def power_ratio(self) -> float:
        return 10.0 ** (self.power_ratio_db / 10.0)


@dataclass(frozen=True)
class GeneratorSpec:
    n_subjects: int = 5
    layout: tuple[tuple[str, float], ...] = DEFAULT_LAYOUT
    effect: EffectSpec = EffectSpec()
    subject_effects: tuple[tuple[int, EffectSpec], ...] = ()  # per-subject overrides
    band_powers: tuple[tuple[str, float], ...] = tuple(DEFAULT_BAND_POWERS.items())
    noise_floor: float = 0.05
    blink_rate_hz: float = 0.25
    blink_amplitude: float = 4.0
    hr_bpm: float = 70.0
    hr_jitter_s: float = 0.005
    gsr_level: float = 5.0
    gsr_slope: float = 0.01
    resp_rate_hz: float = 0.25
    temp_level: float = 33.0
    temp_slope: float = 0.001
    q_mean_ldr: float = 5.0
    q_mean_tmhdr: float = 7.0
    q_std: float = 1.2
    seed: int = 0

    def validate(self) -> None:
        if self.n_subjects < 1:
            raise SynthError(f"n_subjects must be >= 1, got {self.n_subjects}")
        if not self.layout:
            raise SynthError("layout is empty")
        for content, dur in self.layout:
            if dur <= 0:
                raise SynthError(f"layout duration for {content} must be positive")
        for band, p in self.band_powers:
            if p <= 0:
                raise SynthError(f"band power for {band} must be positive, got {p}")
        if self.noise_floor < 0:
            raise SynthError("noise floor must be non-negative")
        self.effect.validate()
        for _, eff in self.subject_effects:
            eff.validate()

    def effect_for(self, subject_idx: int) -> EffectSpec:
        for idx, eff in self.subject_effects:
            if idx == subject_idx:
                return eff
        return self.effect


def _band_sos(band_name: str) -> np.ndarray:
    b = BANDS[band_name]
    return sps.butter(4, [b.low_hz, b.high_hz], btype="bandpass", fs=SAMPLE_RATE, output="sos")


def _filtfilt_gain(sos: np.ndarray) -> float:
    """Output variance of the zero-phase filter for unit white noise:
    (1/pi) * integral of |H|^4 (forward-backward application squares the
    magnitude response)."""
    w, h = sps.sosfreqz(sos, worN=8192)
    return float(np.trapezoid(np.abs(h) ** 4, w) / np.pi)


def _shaped_noise(rng: np.random.Generator, n_channels: int, n: int, sos: np.ndarray,
                  gain: float) -> np.ndarray:
    """Band-limited noise rows with unit expected variance.

    Scaling by the analytic filter gain (not the empirical spread) keeps
    separate time windows statistically independent; pinning the realized
    variance would anti-correlate the windows of one period.
    """
    white = rng.standard_normal((n_channels, n))
    return sps.sosfiltfilt(sos, white, axis=-1) / np.sqrt(gain)


def _blink_template() -> np.ndarray:
    # 400 ms biphasic pulse: positive then negative lobe.
    t = np.arange(int(0.4 * SAMPLE_RATE)) / SAMPLE_RATE
    return np.sin(2.0 * np.pi * t / 0.4)


def _blink_train(rng: np.random.Generator, n: int, rate_hz: float) -> np.ndarray:
    out = np.zeros(n)
    template = _blink_template()
    t = rng.exponential(1.0 / rate_hz) if rate_hz > 0 else np.inf
    while t * SAMPLE_RATE < n:
        i = int(t * SAMPLE_RATE)
        j = min(i + len(template), n)
        out[i:j] += template[: j - i]
        t += rng.exponential(1.0 / rate_hz)
    return out


def _stimulus_order(rng: np.random.Generator, layout) -> list[tuple[str, float, str]]:
    """Randomized (content, duration, dynamic_range) order; the same content
    never plays twice in a row (falls back to an interleaved order when the
    layout makes rejection sampling hopeless)."""
    items = [(c, d, dr) for c, d in layout for dr in ("LDR", "TMHDR")]
    for _ in range(1000):
        perm = [items[i] for i in rng.permutation(len(items))]
        if all(perm[i][0] != perm[i + 1][0] for i in range(len(perm) - 1)):
            return perm
    first = [it for it in items if it[2] == "LDR"]
    second = [it for it in items if it[2] == "TMHDR"]
    second = second[1:] + second[:1]
    return [x for pair in zip(first, second) for x in pair]


def _pulse_train(rng: np.random.Generator, n: int, hr_of_sample: np.ndarray, jitter_s: float) -> np.ndarray:
    """Plethysmograph-like pulse train whose instantaneous rate follows
    ``hr_of_sample`` (bpm per sample)."""
    width = int(0.16 * SAMPLE_RATE)
    t_axis = (np.arange(width) - width / 2) / SAMPLE_RATE
    pulse = np.exp(-0.5 * (t_axis / 0.025) ** 2)
    out = np.zeros(n)
    t = 0.25  # first beat
    while True:
        i = int(round(t * SAMPLE_RATE))
        if i >= n:
            break
        lo = max(i - width // 2, 0)
        hi = min(i + (width - width // 2), n)
        out[lo:hi] += pulse[lo - (i - width // 2): hi - (i - width // 2)]
        ibi = 60.0 / hr_of_sample[min(i, n - 1)]
        t += ibi + (rng.standard_normal() * jitter_s if jitter_s > 0 else 0.0)
    out += 0.1 * np.sin(2.0 * np.pi * 0.25 * np.arange(n) / SAMPLE_RATE)
    out += 0.01 * rng.standard_normal(n)
    return out


def generate_dataset(spec: GeneratorSpec) -> tuple[list[Recording], list[RatingRecord], dict]:
    """Generate recordings, ratings, and the ground-truth manifest."""
    spec.validate()
    band_powers = dict(spec.band_powers)
    band_sos = {b: _band_sos(b) for b in BAND_ORDER}
    band_gain = {b: _filtfilt_gain(band_sos[b]) for b in BAND_ORDER}

    recordings: list[Recording] = []
    ratings: list[RatingRecord] = []
    truth: dict = {"seed": spec.seed, "subjects": {}}

    for si in range(spec.n_subjects):
        subject_id = f"s{si + 1:02d}"
        ss = np.random.SeedSequence((spec.seed, si))
        sig_rng, blink_rng, rating_rng = (np.random.default_rng(c) for c in ss.spawn(3))
        effect = spec.effect_for(si)
        ratio = effect.power_ratio

        order = _stimulus_order(sig_rng, spec.layout)
        markers: list[StimulusMarker] = []
        t = 0.0
        for content, dur, dr in order:
            stim_id = f"{content}_{dr}"
            markers.append(StimulusMarker(t, t + 10.0, "BASELINE", content, dr, stim_id))
            t += 10.0
            markers.append(StimulusMarker(t, t + dur, "STIMULUS", content, dr, stim_id))
            t += dur
        total_s = t
        n_total = int(round(total_s * SAMPLE_RATE))

        # Per-sample class context for the peripheral models.
        is_tmhdr = np.zeros(n_total, dtype=bool)
        for m in markers:
            if m.kind == "STIMULUS" and m.dynamic_range == "TMHDR":
                is_tmhdr[int(m.start_s * SAMPLE_RATE): int(m.end_s * SAMPLE_RATE)] = True

        # EEG: per period, per band, shaped noise scaled to the period's
        # target power. The reference electrode stays identically zero, and
        # baseline periods pin the measured (trimmed-window) Welch band
        # power to the target exactly; stimulus periods pin the time-domain
        # variance, keeping natural per-segment estimation noise.
        gen_names = [c for c in EEG_CHANNELS_32 if c != "Cz"]
        eeg = np.zeros((len(EEG_CHANNELS_32), n_total))
        ch_index = {c: i for i, c in enumerate(EEG_CHANNELS_32)}
        gen_rows = np.array([ch_index[c] for c in gen_names])
        trim_n = int(round(1.0 * SAMPLE_RATE))
        for m in markers:
            lo, hi = int(round(m.start_s * SAMPLE_RATE)), int(round(m.end_s * SAMPLE_RATE))
            n = hi - lo
            scaled = m.kind == "STIMULUS" and m.dynamic_range == "TMHDR"
            for band in BAND_ORDER:
                base = band_powers[band]
                noise = _shaped_noise(sig_rng, len(gen_names), n, band_sos[band], band_gain[band])
                if m.kind == "BASELINE":
                    measured = np.array([
                        band_power(welch_psd(row[trim_n:n - trim_n], SAMPLE_RATE), BANDS[band])
                        for row in noise
                    ])
                    noise /= np.sqrt(np.maximum(measured, 1e-300))[:, None]
                power = np.full(len(gen_names), base)
                if scaled and band in effect.bands:
                    for ch in effect.electrodes:
                        power[gen_names.index(ch)] = base * ratio
                eeg[gen_rows, lo:hi] += noise * np.sqrt(power)[:, None]
        if spec.noise_floor > 0:
            eeg[gen_rows] += np.sqrt(spec.noise_floor) * sig_rng.standard_normal((len(gen_names), n_total))

        blink = spec.blink_amplitude * _blink_train(blink_rng, n_total, spec.blink_rate_hz)
        for ch, gain in BLINK_TOPOGRAPHY.items():
            eeg[ch_index[ch]] += gain * blink

        samples: dict[str, np.ndarray] = {
            c: eeg[i].astype(np.float32) for c, i in ch_index.items()
        }
        channels = [ChannelSpec(c, "EEG", SAMPLE_RATE) for c in EEG_CHANNELS_32]
        eog_noise_scale = 0.05 * max(spec.blink_amplitude, 1.0)
        for name, gain in EOG_CHANNEL_GAINS.items():
            sig = gain * blink + eog_noise_scale * sig_rng.standard_normal(n_total)
            samples[name] = sig.astype(np.float32)
            channels.append(ChannelSpec(name, "EOG", SAMPLE_RATE))

        # Peripheral channel noise levels are deliberately of the same
        # order: the ranking criterion scales with 1/variance, so a channel
        # with near-zero noise would spuriously dominate every ranking.
        t_axis = np.arange(n_total) / SAMPLE_RATE
        gsr_slope = np.where(is_tmhdr, spec.gsr_slope + effect.gsr_slope_delta, spec.gsr_slope)
        gsr = spec.gsr_level + np.cumsum(gsr_slope) / SAMPLE_RATE
        gsr += sps.sosfiltfilt(sps.butter(2, 0.5, fs=SAMPLE_RATE, output="sos"),
                               0.2 * sig_rng.standard_normal(n_total))
        samples["GSR"] = gsr.astype(np.float32)
        channels.append(ChannelSpec("GSR", "GSR", SAMPLE_RATE))

        resp = np.sin(2.0 * np.pi * spec.resp_rate_hz * t_axis) + 0.25 * sig_rng.standard_normal(n_total)
        samples["RESP"] = resp.astype(np.float32)
        channels.append(ChannelSpec("RESP", "RESP", SAMPLE_RATE))

        hr = np.where(is_tmhdr, spec.hr_bpm + effect.hr_offset_bpm, spec.hr_bpm)
        samples["PLETH"] = _pulse_train(sig_rng, n_total, hr, spec.hr_jitter_s).astype(np.float32)
        channels.append(ChannelSpec("PLETH", "PLETH", SAMPLE_RATE))

        temp_slope = np.where(is_tmhdr, spec.temp_slope + effect.temp_slope_delta, spec.temp_slope)
        temp = spec.temp_level + np.cumsum(temp_slope) / SAMPLE_RATE + 0.05 * sig_rng.standard_normal(n_total)
        samples["TEMP"] = temp.astype(np.float32)
        channels.append(ChannelSpec("TEMP", "TEMP", SAMPLE_RATE))

        recordings.append(Recording(subject_id, channels, samples, markers))

        subject_truth = {"effect": asdict(effect), "stimuli": {}}
        for content, dur, dr in order:
            stim_id = f"{content}_{dr}"
            expected = {}
            for ch in EEG_CHANNELS_31:
                for band in BAND_ORDER:
                    affected = (
                        dr == "TMHDR" and band in effect.bands and ch in effect.electrodes
                    )
                    delta = band_powers[band] * (ratio - 1.0) if affected else 0.0
                    expected[f"{ch}_{band}"] = delta
            subject_truth["stimuli"][stim_id] = {
                "class": dr,
                "content": content,
                "duration_s": dur,
                "eeg_expected_feature": expected,
                "hr_bpm": spec.hr_bpm + (effect.hr_offset_bpm if dr == "TMHDR" else 0.0),
                "gsr_slope": spec.gsr_slope + (effect.gsr_slope_delta if dr == "TMHDR" else 0.0),
                "temp_slope": spec.temp_slope + (effect.temp_slope_delta if dr == "TMHDR" else 0.0),
                "resp_peak_to_peak_s": 1.0 / spec.resp_rate_hz,
            }
        truth["subjects"][subject_id] = subject_truth

        for content, _dur in spec.layout:
            qs = {}
            for dr, mean in (("LDR", spec.q_mean_ldr), ("TMHDR", spec.q_mean_tmhdr)):
                qs[dr] = [
                    int(np.clip(round(rating_rng.normal(mean, spec.q_std)), 1, 9))
                    for _ in range(3)
                ]
            comp1 = int(np.clip(round((qs["TMHDR"][0] - qs["LDR"][0]) / 2.0), -3, 3))
            comp2 = int(np.clip(round((qs["TMHDR"][1] - qs["LDR"][1]) / 2.0), -3, 3))
            for dr in ("LDR", "TMHDR"):
                ratings.append(
                    RatingRecord(
                        subject_id=subject_id,
                        content=content,
                        dynamic_range=dr,
                        q1=qs[dr][0],
                        q2=qs[dr][1],
                        q3=qs[dr][2],
                        comp_q1=comp1,
                        comp_q2=comp2,
                    )
                )

    return recordings, ratings, truth


def write_dataset(spec: GeneratorSpec, out_dir: str | Path) -> dict:
    """Generate and persist a PhysioSet plus its ground-truth manifest."""
    recordings, ratings, truth = generate_dataset(spec)
    out = Path(out_dir)
    save_physioset(recordings, ratings, out)
    (out / "ground_truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")
    return truth


# ---------------------------------------------------------------------------
# Analytic oracle

N_GRID_BINS = 129  # 0..128 Hz inclusive on the 1 Hz Welch grid


def band_bin_count(band_name: str) -> int:
    b = BANDS[band_name]
    return int(b.high_hz - b.low_hz) + 1


def oracle_band_power(components: list[tuple], band_name: str) -> float:
    """Expected Welch band power of a sum of independent components.

    Components: ("white", variance) spreads its variance uniformly over the
    129-bin grid; ("sinusoid", amplitude, freq_hz) contributes A^2/2 when
    its frequency falls inside the band; ("band", name, variance) puts all
    its variance in its own band. Contributions add.
    """
    band = BANDS[band_name]
    total = 0.0
    for comp in components:
        kind = comp[0]
        if kind == "white":
            total += comp[1] * band_bin_count(band_name) / N_GRID_BINS
        elif kind == "sinusoid":
            _, amp, freq = comp
            if band.low_hz <= freq <= band.high_hz:
                total += amp**2 / 2.0
        elif kind == "band":
            _, name, var = comp
            if name == band_name:
                total += var
        else:
            raise SynthError(f"unknown component kind {kind!r}")
    return total
