"""Extended-Infomax independent component analysis for ocular artifact
rejection.

The decomposition follows the classic natural-gradient block algorithm with
sub/super-Gaussian switching: sphere the centered data, then iterate

    W <- W + lrate * (block*I - signs . tanh(u) u^T - u u^T) W

over shuffled data blocks, annealing the learning rate when the update
direction turns by more than 60 degrees, until the squared Frobenius norm of
the per-pass weight change falls below ``tol``. Everything is seeded, so a
decomposition is a pure function of (data, seed).

Components whose absolute Pearson correlation with any EOG channel reaches
the rejection threshold are zeroed before reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class IcaError(Exception):
    """Degenerate input (rank deficiency) or invalid arguments."""


class IcaConvergenceError(IcaError):
    """The weight update did not fall below tolerance within max_iter."""

    def __init__(self, n_iter: int, wchange: float):
        self.n_iter = n_iter
        self.wchange = wchange
        super().__init__(
            f"ICA did not converge after {n_iter} iterations (weight change {wchange:.3e})"
        )


@dataclass
class IcaDecomposition:
    """Audit record of one decomposition and the rejection applied to it."""

    mixing: np.ndarray          # channels x components
    unmixing: np.ndarray        # components x channels
    sources: np.ndarray         # components x samples
    mean: np.ndarray            # per-channel mean removed before unmixing
    artifact_scores: np.ndarray  # per-component max |corr| against EOG
    rejected: np.ndarray        # boolean mask of zeroed components
    n_iter: int


def extended_infomax(
    data: np.ndarray,
    seed: int = 0,
    max_iter: int = 512,
    tol: float = 1e-7,
    lrate: float | None = None,
    block: int | None = None,
) -> tuple[np.ndarray, int]:
    """Decompose ``data`` (channels x samples, assumed centered).

    Returns the total unmixing matrix (components x channels, sphering
    included) and the number of passes used. Raises
    :class:`IcaConvergenceError` when ``max_iter`` passes do not reach
    ``tol`` and :class:`IcaError` on rank-deficient input.
    """
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise IcaError(f"need a (channels >= 2) x samples array, got shape {X.shape}")
    ch, n = X.shape
    if n < ch * 4:
        raise IcaError(f"{n} samples is too short to decompose {ch} channels")

    cov = (X @ X.T) / n
    evals, evecs = np.linalg.eigh(cov)
    if evals[0] < 1e-12 * max(evals[-1], 1e-300):
        raise IcaError(
            f"rank-deficient input (eigenvalue ratio {evals[0] / max(evals[-1], 1e-300):.3e})"
        )
    sphere = (evecs * (1.0 / np.sqrt(evals))) @ evecs.T
    Xw = sphere @ X

    rng = np.random.default_rng(np.random.SeedSequence((seed, ch, n)))
    if lrate is None:
        lrate = 0.00065 / np.log(ch) if ch > 2 else 0.0005
    if block is None:
        block = int(np.clip(np.ceil(np.sqrt(n / 3.0)), 8, n))
    kurt_size = min(6000, n)
    signs_bias = 0.02
    anneal_deg_cos = np.cos(np.deg2rad(60.0))
    anneal_step = 0.9
    blowup_limit = 1e8

    W = np.eye(ch)
    signs = np.ones(ch)
    old_delta = None
    n_iter = 0
    wchange = np.inf

    while n_iter < max_iter:
        n_iter += 1
        W_prev = W.copy()

        # Sub/super-Gaussian switching from a kurtosis estimate per pass.
        idx = rng.choice(n, size=kurt_size, replace=False) if kurt_size < n else slice(None)
        u_k = W @ Xw[:, idx]
        m2 = np.mean(u_k**2, axis=1)
        m4 = np.mean(u_k**4, axis=1)
        kurt = m4 / np.maximum(m2**2, 1e-300) - 3.0
        signs = np.sign(kurt + signs_bias)
        signs[signs == 0] = 1.0

        perm = rng.permutation(n)
        blew_up = False
        for start in range(0, n - block + 1, block):
            xb = Xw[:, perm[start:start + block]]
            u = W @ xb
            y = np.tanh(u)
            grad = block * np.eye(ch) - (signs[:, None] * y) @ u.T - u @ u.T
            W = W + lrate * (grad @ W)
            if not np.all(np.isfinite(W)) or np.max(np.abs(W)) > blowup_limit:
                blew_up = True
                break

        if blew_up:
            W = np.eye(ch)
            signs = np.ones(ch)
            old_delta = None
            lrate *= 0.5
            if lrate < 1e-12:
                raise IcaError("learning rate underflow; input may be degenerate")
            continue

        delta = (W - W_prev).ravel()
        wchange = float(delta @ delta)
        if old_delta is not None:
            denom = np.linalg.norm(delta) * np.linalg.norm(old_delta)
            if denom > 0 and (delta @ old_delta) / denom < anneal_deg_cos:
                lrate *= anneal_step
        old_delta = delta
        if wchange < tol:
            return W @ sphere, n_iter

    raise IcaConvergenceError(n_iter, wchange)


def _max_abs_corr(sources: np.ndarray, eog: np.ndarray) -> np.ndarray:
    """Per-source max |Pearson correlation| over EOG channels (0 where either
    side has zero variance)."""
    s = sources - sources.mean(axis=1, keepdims=True)
    e = eog - eog.mean(axis=1, keepdims=True)
    s_norm = np.linalg.norm(s, axis=1)
    e_norm = np.linalg.norm(e, axis=1)
    num = np.abs(s @ e.T)  # components x eog
    denom = s_norm[:, None] * e_norm[None, :]
    corr = np.zeros_like(num)
    ok = denom > 0
    corr[ok] = num[ok] / denom[ok]
    return corr.max(axis=1)


def ica_artifact_reject(
    eeg: dict[str, np.ndarray] | np.ndarray,
    eog: np.ndarray,
    threshold: float = 0.6,
    max_iter: int = 512,
    seed: int = 0,
    tol: float = 1e-7,
) -> tuple[dict[str, np.ndarray] | np.ndarray, IcaDecomposition]:
    """Remove EOG-correlated components from EEG channels.

    ``eeg`` may be a channel-name dict or a (channels x samples) array; the
    cleaned signals come back in the same form. ``eog`` is (channels x
    samples) or a single 1-D channel. ``threshold`` = 0 rejects every
    component (all-zero output up to the re-added channel means);
    ``threshold`` > 1 can never reject.
    """
    if not 0.0 <= threshold <= 1.0:
        raise IcaError(f"threshold {threshold} outside [0, 1]")
    names: list[str] | None = None
    if isinstance(eeg, dict):
        names = list(eeg.keys())
        X = np.vstack([np.asarray(eeg[k], dtype=np.float64) for k in names])
    else:
        X = np.asarray(eeg, dtype=np.float64)
    E = np.atleast_2d(np.asarray(eog, dtype=np.float64))
    if X.shape[0] < 2:
        raise IcaError("need at least 2 EEG channels")
    if E.shape[0] < 1 or E.shape[1] != X.shape[1]:
        raise IcaError(
            f"EOG shape {E.shape} incompatible with EEG shape {X.shape} (need equal lengths)"
        )

    mean = X.mean(axis=1, keepdims=True)
    Xc = X - mean
    unmix, n_iter = extended_infomax(Xc, seed=seed, max_iter=max_iter, tol=tol)
    sources = unmix @ Xc
    mixing = np.linalg.inv(unmix)
    scores = _max_abs_corr(sources, E)
    rejected = scores >= threshold

    kept = sources.copy()
    kept[rejected, :] = 0.0
    clean = mixing @ kept + mean

    decomposition = IcaDecomposition(
        mixing=mixing,
        unmixing=unmix,
        sources=sources,
        mean=mean.ravel(),
        artifact_scores=scores,
        rejected=rejected,
        n_iter=n_iter,
    )
    if names is not None:
        return {k: clean[i] for i, k in enumerate(names)}, decomposition
    return clean, decomposition
