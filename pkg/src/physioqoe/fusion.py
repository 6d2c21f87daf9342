"""Weighted-product late fusion of the EEG and peripheral classifiers.

Fused class scores are ``p_eeg^w * p_peri^(1-w)`` with ``w`` in [0, 1];
the decision is the argmax (ties to class A). Posteriors are clamped to a
1e-12 floor before exponentiation, which keeps the log-linear identity
``log score = w log p_eeg + (1-w) log p_peri`` testable; the degenerate
weights w=1 and w=0 reproduce the unimodal decisions exactly because
``p^1 == p`` and ``p^0 == 1`` hold bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

POSTERIOR_FLOOR = 1e-12
DEFAULT_WEIGHT_GRID = tuple(np.linspace(0.0, 1.0, 21))


class FusionError(Exception):
    pass


@dataclass(frozen=True)
class FusionDecision:
    weight: float
    scores: tuple[float, float]
    decided_class: int


def fuse(p_eeg: np.ndarray, p_peri: np.ndarray, w: float) -> FusionDecision:
    if not 0.0 <= w <= 1.0:
        raise FusionError(f"weight {w} outside [0, 1]")
    pe = np.maximum(np.asarray(p_eeg, dtype=np.float64), POSTERIOR_FLOOR)
    pp = np.maximum(np.asarray(p_peri, dtype=np.float64), POSTERIOR_FLOOR)
    scores = pe**w * pp**(1.0 - w)
    return FusionDecision(weight=w, scores=(float(scores[0]), float(scores[1])),
                          decided_class=int(np.argmax(scores)))


def fuse_decisions(p_eeg: np.ndarray, p_peri: np.ndarray, w: float) -> np.ndarray:
    """Vectorized decisions for (n, 2) posterior arrays."""
    if not 0.0 <= w <= 1.0:
        raise FusionError(f"weight {w} outside [0, 1]")
    pe = np.maximum(p_eeg, POSTERIOR_FLOOR)
    pp = np.maximum(p_peri, POSTERIOR_FLOOR)
    return np.argmax(pe**w * pp**(1.0 - w), axis=1)


def grid_search_weight(
    loo_eeg: np.ndarray,
    loo_peri: np.ndarray,
    y: np.ndarray,
    grid: tuple[float, ...] = DEFAULT_WEIGHT_GRID,
) -> float:
    """Pick the fusion weight by leave-one-out fused accuracy on the
    training split, re-using fold-wise unimodal posteriors.

    Ties prefer the weight closest to 0.5, then the smaller weight. Folds
    with failed (NaN) posteriors count as incorrect for every weight.
    """
    if not grid:
        raise FusionError("empty weight grid")
    y = np.asarray(y, dtype=int)
    ok = np.isfinite(loo_eeg[:, 0]) & np.isfinite(loo_peri[:, 0])
    pe = np.nan_to_num(loo_eeg, nan=POSTERIOR_FLOOR)
    pp = np.nan_to_num(loo_peri, nan=POSTERIOR_FLOOR)
    best_w = None
    best_acc = -1.0
    for w in sorted(grid, key=lambda w: (abs(w - 0.5), w)):
        acc = float(np.mean(ok & (fuse_decisions(pe, pp, w) == y)))
        if acc > best_acc:
            best_acc = acc
            best_w = w
    return float(best_w)


def oracle_weight(
    test_eeg: np.ndarray,
    test_peri: np.ndarray,
    y: np.ndarray,
    grid: tuple[float, ...] = DEFAULT_WEIGHT_GRID,
) -> float:
    """Exhaustive weight maximizing accuracy on the *test* posteriors (the
    reference against which trained weights are scored)."""
    return grid_search_weight(test_eeg, test_peri, y, grid)


def weight_rmse(trained: list[float] | np.ndarray, oracle: list[float] | np.ndarray) -> float:
    t = np.asarray(trained, dtype=np.float64)
    o = np.asarray(oracle, dtype=np.float64)
    if t.shape != o.shape or t.size == 0:
        raise FusionError(f"need equal-length non-empty weight lists, got {t.shape} and {o.shape}")
    return float(np.sqrt(np.mean((t - o) ** 2)))
