"""Run configuration: one flat key=value file plus CLI flag overrides.

File format: ``key = value`` lines, ``#`` comments. Values parse as JSON
first (numbers, lists, booleans), falling back to bare strings. Flags win
over file values; the effective configuration is embedded in every report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .evaluate import HarnessConfig
from .preprocess import PreprocessConfig


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    # preprocessing
    resample_target_hz: float = 256.0
    eeg_band: tuple[float, float] = (2.0, 100.0)
    resp_lowpass_hz: float = 10.0
    ica_threshold: float = 0.6
    ica_max_iter: int = 512
    ica_seed: int = 0
    trim_s: float = 1.0
    segment_s: float = 10.0
    # classifier
    hidden_grid: tuple[int, ...] = (1, 2, 4, 8, 16)
    k_grid_eeg: tuple[int, ...] = (5, 10, 20, 40)
    k_grid_peri: tuple[int, ...] = (3, 5, 8, 13)
    lm_damping_init: float = 1e-3
    lm_damping_factor: float = 10.0
    lm_damping_max: float = 1e10
    lm_max_epochs: int = 200
    lm_grad_tol: float = 1e-7
    # fusion
    fusion_weight_step: float = 0.05
    # ratings
    ratings_pooled_t: bool = False

    def validate(self) -> None:
        if self.resample_target_hz <= 0:
            raise ConfigError("resample.target_hz must be positive")
        low, high = self.eeg_band
        if not 0 <= low < high < self.resample_target_hz / 2:
            raise ConfigError(f"eeg.band {self.eeg_band} invalid for target rate {self.resample_target_hz}")
        if not 0 < self.resp_lowpass_hz < self.resample_target_hz / 2:
            raise ConfigError("resp.lowpass_hz outside (0, Nyquist)")
        if self.ica_threshold < 0:
            raise ConfigError("ica.threshold must be >= 0")
        if self.trim_s < 0 or self.segment_s <= 0:
            raise ConfigError("trim_s must be >= 0 and segment_s > 0")
        if not self.hidden_grid or any(h < 1 for h in self.hidden_grid):
            raise ConfigError("classify.hidden_grid must list positive integers")
        for name in ("k_grid_eeg", "k_grid_peri"):
            grid = getattr(self, name)
            if not grid or any(k < 1 for k in grid):
                raise ConfigError(f"selection.{name} must list positive integers")
        if not 0 < self.fusion_weight_step <= 1:
            raise ConfigError("fusion.weight_step outside (0, 1]")
        if self.lm_max_epochs < 1 or self.lm_damping_init <= 0:
            raise ConfigError("lm settings invalid")

    def preprocess_config(self) -> PreprocessConfig:
        return PreprocessConfig(
            target_hz=self.resample_target_hz,
            eeg_band=tuple(self.eeg_band),
            resp_lowpass_hz=self.resp_lowpass_hz,
            ica_threshold=self.ica_threshold,
            ica_max_iter=self.ica_max_iter,
            ica_seed=self.ica_seed,
            trim_s=self.trim_s,
            segment_s=self.segment_s,
        )

    def harness_config(self) -> HarnessConfig:
        step = self.fusion_weight_step
        n = int(round(1.0 / step))
        grid = tuple(round(i * step, 10) for i in range(n + 1))
        return HarnessConfig(
            hidden_grid=tuple(self.hidden_grid),
            k_grid_eeg=tuple(self.k_grid_eeg),
            k_grid_peri=tuple(self.k_grid_peri),
            damping_init=self.lm_damping_init,
            damping_factor=self.lm_damping_factor,
            damping_max=self.lm_damping_max,
            max_epochs=self.lm_max_epochs,
            grad_tol=self.lm_grad_tol,
            weight_grid=grid,
        )

    def to_dict(self) -> dict:
        out = {}
        for key, attr in KEY_MAP.items():
            v = getattr(self, attr)
            out[key] = list(v) if isinstance(v, tuple) else v
        return out


KEY_MAP = {
    "resample.target_hz": "resample_target_hz",
    "eeg.band": "eeg_band",
    "resp.lowpass_hz": "resp_lowpass_hz",
    "ica.threshold": "ica_threshold",
    "ica.max_iter": "ica_max_iter",
    "ica.seed": "ica_seed",
    "trim_s": "trim_s",
    "segment_s": "segment_s",
    "classify.hidden_grid": "hidden_grid",
    "selection.k_grid_eeg": "k_grid_eeg",
    "selection.k_grid_peri": "k_grid_peri",
    "lm.damping_init": "lm_damping_init",
    "lm.damping_factor": "lm_damping_factor",
    "lm.damping_max": "lm_damping_max",
    "lm.max_epochs": "lm_max_epochs",
    "lm.grad_tol": "lm_grad_tol",
    "fusion.weight_step": "fusion_weight_step",
    "ratings.pooled_t": "ratings_pooled_t",
}

_TUPLE_FIELDS = {"eeg_band", "hidden_grid", "k_grid_eeg", "k_grid_peri"}


def _coerce(attr: str, value):
    if attr in _TUPLE_FIELDS:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{attr} needs a list value, got {value!r}")
        return tuple(value)
    return value


def load_config(path: str | Path | None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        cfg.validate()
        return cfg
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} missing")
    for lineno, raw in enumerate(p.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{p}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in KEY_MAP:
            raise ConfigError(f"{p}:{lineno}: unknown key {key!r}")
        try:
            parsed = json.loads(value.strip())
        except json.JSONDecodeError:
            parsed = value.strip()
        setattr(cfg, KEY_MAP[key], _coerce(KEY_MAP[key], parsed))
    cfg.validate()
    return cfg
