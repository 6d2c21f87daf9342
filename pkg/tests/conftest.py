import numpy as np
import pytest

from physioqoe import evaluate as ev
from physioqoe import synth
from physioqoe.preprocess import PreprocessConfig

# Reduced layout/grids for protocol tests: 8 segments per subject and a
# 2x2 search grid keep a full run in the seconds range. ICA is covered by
# its own tests and the acceptance suite; it is disabled here for speed
# (thresholds above 1 can never reject, which skips the decomposition).
SMALL_LAYOUT = (("hall", 20.0), ("window", 20.0))
SMALL_HARNESS = ev.HarnessConfig(hidden_grid=(2, 4), k_grid_eeg=(5, 10), k_grid_peri=(3, 5))
NO_ICA = PreprocessConfig(ica_threshold=1.1)


def small_bundle(n_subjects=3, gamma_db=6.0, hr_offset=6.0, seed=101, subject_effects=()):
    spec = synth.GeneratorSpec(
        n_subjects=n_subjects,
        layout=SMALL_LAYOUT,
        effect=synth.EffectSpec(power_ratio_db=gamma_db, hr_offset_bpm=hr_offset),
        subject_effects=subject_effects,
        seed=seed,
    )
    recordings, ratings, truth = synth.generate_dataset(spec)
    bundle = ev.build_feature_bundle(recordings, ratings, NO_ICA)
    return bundle, truth


@pytest.fixture(scope="session")
def effect_bundle():
    """3 subjects, strong gamma + heart-rate effect, 8 segments each."""
    bundle, _ = small_bundle()
    return bundle


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
