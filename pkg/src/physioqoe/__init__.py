"""Implicit quality-of-experience measurement from physiological signals.

Library layout:

- ``model``       domain types, montage, canonical feature orders, validation
- ``physioset``   on-disk dataset format (manifest + raw float32 channels + CSVs)
- ``preprocess``  resampling, trimming, filtering, re-referencing, segmentation
- ``ica``         extended-Infomax ICA and EOG-correlated artifact rejection
- ``features``    Welch band-power EEG features and peripheral signal features
- ``selection``   Fisher-criterion ranking and selection-frequency reporting
- ``classify``    one-hidden-layer sigmoid MLP trained by Levenberg-Marquardt
- ``fusion``      weighted-product late fusion of the two modalities
- ``evaluate``    task labels, metrics, subject-dependent/independent protocols
- ``ratings``     subjective-rating statistics (t-tests, PCC, paired comparison)
- ``synth``       synthetic dataset generator with analytic ground truth
- ``report``      JSON/CSV report writers and matplotlib figure rendering
- ``cli``         command-line entry point
"""

__version__ = "0.1.0"
