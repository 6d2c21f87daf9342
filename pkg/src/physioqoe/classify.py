"""One-hidden-layer sigmoid network trained by Levenberg-Marquardt.

The network has two sigmoid output units fit to one-hot targets by damped
Gauss-Newton on the sum-of-squares error; prediction normalizes the raw
outputs into a two-class posterior. Inputs are z-scored with statistics of
the training split, stored on the model.

Training is implemented over a batch axis so that all leave-one-out folds
of a grid-search cell train simultaneously: each fold is a 0/1 example mask
over the shared design matrix, which makes its normal equations identical
to training on the subset alone. When a fold has more parameters than
(masked) residuals the LM step is solved in residual space,
``delta = -J^T (J J^T + lambda I)^{-1} r``; the residual-space matrix
J J^T decomposes into input/hidden Gram matrices times small gate outer
products, so the Jacobian itself is never materialized on that path.

Steps are accepted only when they strictly decrease the loss, so the loss
trace is non-increasing by construction. Everything is a pure function of
(data, seed): identical runs give bit-identical weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


class TrainingError(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    hidden_grid: tuple[int, ...] = (1, 2, 4, 8, 16)
    damping_init: float = 1e-3
    damping_factor: float = 10.0
    damping_max: float = 1e10
    max_epochs: int = 200
    grad_tol: float = 1e-7
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.hidden_grid:
            raise ValueError("hidden grid must be non-empty")
        if self.damping_init <= 0 or self.damping_factor <= 1:
            raise ValueError("damping parameters must be positive (factor > 1)")


@dataclass
class MlpModel:
    feature_names: tuple[str, ...]
    hidden_n: int
    mean: np.ndarray
    std: np.ndarray
    w1: np.ndarray  # hidden x input
    b1: np.ndarray  # hidden
    w2: np.ndarray  # 2 x hidden
    b2: np.ndarray  # 2

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]


# Accepted steps whose relative loss decrease falls below this are treated
# as converged (the classic ftol stop); avoids grinding out sub-rounding
# improvements on plateaus.
_FTOL = 1e-9


def _param_count(d: int, h: int) -> int:
    return h * d + h + 2 * h + 2


def _unpack(theta: np.ndarray, d: int, h: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Split flat parameter vectors (.., P) into weight blocks."""
    lead = theta.shape[:-1]
    o1 = h * d
    w1 = theta[..., :o1].reshape(*lead, h, d)
    b1 = theta[..., o1:o1 + h]
    w2 = theta[..., o1 + h:o1 + 3 * h].reshape(*lead, 2, h)
    b2 = theta[..., o1 + 3 * h:]
    return w1, b1, w2, b2


def _forward(xs: np.ndarray, theta: np.ndarray, d: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    """Batched forward pass: xs (F,N,d), theta (F,P) -> (Y (F,N,2), H (F,N,h))."""
    w1, b1, w2, b2 = _unpack(theta, d, h)
    hidden = expit(xs @ w1.transpose(0, 2, 1) + b1[:, None, :])
    out = expit(hidden @ w2.transpose(0, 2, 1) + b2[:, None, :])
    return out, hidden


def _gate_terms(hidden: np.ndarray, out: np.ndarray, theta: np.ndarray,
                mask: np.ndarray, d: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    """Masked residual derivatives: dy (F,N,2) and the hidden-layer gate
    G[f,n,o,j] = dy * w2[o,j] * h'(n,j) (F,N,2,h)."""
    _, _, w2, _ = _unpack(theta, d, h)
    dy = out * (1.0 - out) * mask[:, :, None]
    hp = hidden * (1.0 - hidden)
    gate = dy[:, :, :, None] * (w2[:, None, :, :] * hp[:, :, None, :])
    return dy, gate


def _jacobian(xs: np.ndarray, hidden: np.ndarray, dy: np.ndarray, gate: np.ndarray,
              d: int, h: int) -> np.ndarray:
    """Materialized residual Jacobian (F, N*2, P); rows already masked
    through dy/gate. Used on the parameter-space (small P) path and by the
    finite-difference checks."""
    f, n = xs.shape[0], xs.shape[1]
    p = _param_count(d, h)
    jac = np.zeros((f, n, 2, p))
    o1 = h * d
    jac[..., :o1] = (gate[..., None] * xs[:, :, None, None, :]).reshape(f, n, 2, o1)
    jac[..., o1:o1 + h] = gate
    for o in (0, 1):
        jac[:, :, o, o1 + h + o * h: o1 + h + (o + 1) * h] = dy[:, :, o, None] * hidden
        jac[:, :, o, o1 + 3 * h + o] = dy[:, :, o]
    return jac.reshape(f, n * 2, p)


def _jt_vec(xs: np.ndarray, hidden: np.ndarray, dy: np.ndarray, gate: np.ndarray,
            vec: np.ndarray) -> np.ndarray:
    """J^T v without materializing J; vec is (F,N,2), result (F,P)."""
    f = xs.shape[0]
    t1 = np.einsum("fno,fnoj->fnj", vec, gate)
    w1 = np.einsum("fnj,fni->fji", t1, xs)
    b1 = t1.sum(axis=1)
    t2 = vec * dy
    w2 = np.einsum("fno,fnj->foj", t2, hidden)
    b2 = t2.sum(axis=1)
    return np.concatenate(
        [w1.reshape(f, -1), b1, w2.reshape(f, -1), b2], axis=1
    )


def _dual_gram(k_in: np.ndarray, hidden: np.ndarray, dy: np.ndarray, gate: np.ndarray) -> np.ndarray:
    """J J^T (F, 2N, 2N) from the Jacobian's Kronecker structure.

    ``k_in`` is xs xs^T + 1 per fold (the +1 absorbing the hidden biases);
    the hidden-layer Gram + 1 absorbs the output biases.
    """
    f, n, _, h = gate.shape
    gr = gate.reshape(f, n * 2, h)
    m = (gr @ gr.transpose(0, 2, 1)).reshape(f, n, 2, n, 2)
    m *= k_in[:, :, None, :, None]
    hh = hidden @ hidden.transpose(0, 2, 1) + 1.0
    for o in (0, 1):
        m[:, :, o, :, o] += dy[:, :, o, None] * dy[:, None, :, o] * hh
    return m.reshape(f, n * 2, n * 2)


def _masked_loss(out: np.ndarray, targets: np.ndarray, mask: np.ndarray) -> np.ndarray:
    r = (out - targets[None]) * mask[:, :, None]
    return np.einsum("fno,fno->f", r, r)


def _init_theta(d: int, h: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.5, 0.5, size=_param_count(d, h))


def _lm_fit(
    xs: np.ndarray,
    targets: np.ndarray,
    mask: np.ndarray,
    h: int,
    cfg: TrainConfig,
    theta0: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Fit one network per batch item.

    xs: standardized inputs (F,N,d); targets: one-hot (N,2); mask: (F,N);
    theta0: optional per-fold initial weights (F,P), defaulting to one draw
    from cfg.seed shared by every fold. Returns (theta (F,P), failed (F,)
    bool). A fold fails only when its damped normal equations stay singular
    up to the damping cap.
    """
    f, n, d = xs.shape
    p = _param_count(d, h)
    theta = np.tile(_init_theta(d, h, cfg.seed), (f, 1)) if theta0 is None else theta0.copy()
    lam = np.full(f, cfg.damping_init)
    active = np.ones(f, dtype=bool)
    failed = np.zeros(f, dtype=bool)
    dual = p > 2 * n
    k_in = (xs @ xs.transpose(0, 2, 1) + 1.0) if dual else None

    out, hidden = _forward(xs, theta, d, h)
    loss = _masked_loss(out, targets, mask)

    for _ in range(cfg.max_epochs):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        a_xs, a_hid, a_out = xs[idx], hidden[idx], out[idx]
        dy, gate = _gate_terms(a_hid, a_out, theta[idx], mask[idx], d, h)
        resid = (a_out - targets[None]) * mask[idx][:, :, None]
        grad = _jt_vec(a_xs, a_hid, dy, gate, resid)
        small_grad = np.abs(grad).max(axis=1) < cfg.grad_tol
        if small_grad.any():
            active[idx[small_grad]] = False
            keep = ~small_grad
            idx = idx[keep]
            if len(idx) == 0:
                continue
            a_xs, a_hid, dy, gate = a_xs[keep], a_hid[keep], dy[keep], gate[keep]
            resid, grad = resid[keep], grad[keep]

        if dual:
            gram = _dual_gram(k_in[idx], a_hid, dy, gate)
        else:
            jac = _jacobian(a_xs, a_hid, dy, gate, d, h)
            gram = jac.transpose(0, 2, 1) @ jac
        eye = np.eye(gram.shape[1])

        undecided = np.ones(len(idx), dtype=bool)
        while undecided.any():
            sel = np.flatnonzero(undecided)
            rows = idx[sel]
            a = gram[sel] + lam[rows][:, None, None] * eye[None]
            try:
                if dual:
                    alpha = np.linalg.solve(a, resid[sel].reshape(len(sel), -1, 1))[..., 0]
                    delta = -_jt_vec(a_xs[sel], a_hid[sel], dy[sel], gate[sel],
                                     alpha.reshape(len(sel), n, 2))
                else:
                    delta = -np.linalg.solve(a, grad[sel][..., None])[..., 0]
            except np.linalg.LinAlgError:
                lam[rows] *= cfg.damping_factor
                exhausted = lam[rows] > cfg.damping_max
                if exhausted.any():
                    bad = rows[exhausted]
                    failed[bad] = True
                    active[bad] = False
                    undecided[sel[exhausted]] = False
                continue
            trial = theta[rows] + delta
            t_out, t_hidden = _forward(a_xs[sel], trial, d, h)
            t_loss = _masked_loss(t_out, targets, mask[rows])
            better = t_loss < loss[rows]

            acc = rows[better]
            stalled = loss[acc] - t_loss[better] < _FTOL * np.maximum(loss[acc], 1.0)
            theta[acc] = trial[better]
            out[acc] = t_out[better]
            hidden[acc] = t_hidden[better]
            loss[acc] = t_loss[better]
            lam[acc] = np.maximum(lam[acc] / cfg.damping_factor, 1e-12)
            active[acc[stalled]] = False
            undecided[sel[better]] = False

            rej = rows[~better]
            lam[rej] *= cfg.damping_factor
            stopped = lam[rej] > cfg.damping_max
            if stopped.any():
                # Cannot improve further at the damping cap: local minimum.
                done = rej[stopped]
                active[done] = False
                undecided[sel[~better][stopped]] = False

    return theta, failed


def fit_fold_batch(
    xs: np.ndarray,
    targets: np.ndarray,
    mask: np.ndarray,
    h: int,
    cfg: TrainConfig,
    theta0: np.ndarray,
    budget_bytes: float = 6.4e7,
) -> tuple[np.ndarray, np.ndarray]:
    """Chunked :func:`_lm_fit` bounding the per-chunk workspace.

    Chunks are independent, so the split is purely a memory cap; chunk size
    depends only on shapes, keeping results deterministic.
    """
    f, n, d = xs.shape
    p = theta0.shape[1]
    # Parameter-space path materializes the Jacobian; the residual-space
    # path only ever holds the (2n x 2n) Gram and the step workspace.
    per_fold = (n * 2 * p if p <= 2 * n else max(n * n * 4, p)) * 8
    chunk = max(1, int(budget_bytes // max(per_fold, 1)))
    if chunk >= f:
        return _lm_fit(xs, targets, mask, h, cfg, theta0)
    thetas, fails = [], []
    for lo in range(0, f, chunk):
        hi = min(lo + chunk, f)
        th, fl = _lm_fit(xs[lo:hi], targets, mask[lo:hi], h, cfg, theta0[lo:hi])
        thetas.append(th)
        fails.append(fl)
    return np.concatenate(thetas), np.concatenate(fails)


def _standardize_stats(x: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-batch-item mean/std over masked rows; zero spread maps to std 1."""
    w = mask[:, :, None]
    n = w.sum(axis=1)
    mean = (x[None] * w).sum(axis=1) / n
    centered = (x[None] - mean[:, None, :]) * w
    var = (centered**2).sum(axis=1) / np.maximum(n - 1.0, 1.0)
    std = np.sqrt(var)
    std[std == 0.0] = 1.0
    return mean, std


def train_mlp(
    x: np.ndarray,
    y: np.ndarray,
    hidden_n: int,
    cfg: TrainConfig,
    feature_names: tuple[str, ...] | None = None,
) -> MlpModel:
    """Train one model on (x, y) with y in {0, 1}."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    if x.ndim != 2 or len(x) != len(y):
        raise TrainingError(f"bad shapes x{x.shape} y{y.shape}")
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise TrainingError("training data contains a single class")
    if counts.min() < 2:
        raise TrainingError("need at least 2 examples per class")

    mask = np.ones((1, len(y)))
    mean, std = _standardize_stats(x, mask)
    xs = (x[None] - mean[:, None, :]) / std[:, None, :]
    targets = np.zeros((len(y), 2))
    targets[np.arange(len(y)), y] = 1.0

    theta, failed = _lm_fit(xs, targets, mask, hidden_n, cfg)
    if failed[0]:
        raise TrainingError("damped normal equations singular beyond the damping cap")
    w1, b1, w2, b2 = _unpack(theta[0], x.shape[1], hidden_n)
    names = feature_names if feature_names is not None else tuple(f"f{i}" for i in range(x.shape[1]))
    return MlpModel(
        feature_names=tuple(names), hidden_n=hidden_n,
        mean=mean[0], std=std[0], w1=w1, b1=b1, w2=w2, b2=b2,
    )


def predict(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Two-class posterior: raw sigmoid outputs normalized to sum 1.

    Ties resolve to class A downstream (argmax picks the first index); both
    outputs underflowing to zero yields the documented (0.5, 0.5) fallback.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise TrainingError(f"input shape {x.shape} does not match model dim {model.input_dim}")
    if not np.all(np.isfinite(x)):
        raise TrainingError("non-finite input")
    xs = (x - model.mean) / model.std
    hidden = expit(model.w1 @ xs + model.b1)
    raw = expit(model.w2 @ hidden + model.b2)
    total = raw.sum()
    if total == 0.0:
        return np.array([0.5, 0.5])
    return raw / total


def loo_posteriors(
    x: np.ndarray,
    y: np.ndarray,
    hidden_n: int,
    cfg: TrainConfig,
) -> np.ndarray:
    """Leave-one-out posteriors: row i comes from the model trained without
    row i. Folds whose training fails yield NaN rows (callers score them as
    incorrect)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    n = len(y)
    if n < 3:
        raise TrainingError("need at least 3 examples for leave-one-out")
    mask = np.ones((n, n))
    np.fill_diagonal(mask, 0.0)
    mean, std = _standardize_stats(x, mask)
    xs = (x[None] - mean[:, None, :]) / std[:, None, :]
    targets = np.zeros((n, 2))
    targets[np.arange(n), y] = 1.0

    theta, failed = _lm_fit(xs, targets, mask, hidden_n, cfg)
    out, _ = _forward(xs, theta, x.shape[1], hidden_n)
    raw = out[np.arange(n), np.arange(n), :]  # fold i predicting example i
    totals = raw.sum(axis=1, keepdims=True)
    post = np.where(totals > 0, raw / np.where(totals > 0, totals, 1.0), 0.5)
    post[failed] = np.nan
    return post


@dataclass
class GridSearchResult:
    hidden_n: int
    k: int
    loo_accuracy: float
    # LOO posteriors of the winning cell (None when the grid was singleton
    # and no search ran).
    posteriors: np.ndarray | None
    accuracy_table: dict[tuple[int, int], float] = field(default_factory=dict)


def grid_search(
    x: np.ndarray,
    y: np.ndarray,
    ranking_idx: np.ndarray,
    cfg: TrainConfig,
    k_grid: tuple[int, ...],
) -> GridSearchResult:
    """Pick (hidden_n, k) by leave-one-out accuracy on the training split.

    Features enter by rank: cell (h, k) trains on the top-k columns of the
    fixed ranking. Ties prefer smaller hidden_n, then smaller k. Fold
    failures score as incorrect and never abort the search.
    """
    y = np.asarray(y, dtype=int)
    if len(y) < 3:
        raise TrainingError("training set too small for leave-one-out search")
    k_grid = tuple(k for k in k_grid if k <= len(ranking_idx)) or (len(ranking_idx),)
    if len(cfg.hidden_grid) == 1 and len(k_grid) == 1:
        return GridSearchResult(cfg.hidden_grid[0], k_grid[0], float("nan"), None)

    best: tuple[float, int, int] | None = None
    best_post = None
    table: dict[tuple[int, int], float] = {}
    for h in sorted(cfg.hidden_grid):
        for k in sorted(k_grid):
            xk = x[:, ranking_idx[:k]]
            post = loo_posteriors(xk, y, h, cfg)
            ok = np.isfinite(post[:, 0])
            correct = ok & (np.argmax(np.nan_to_num(post, nan=-1.0), axis=1) == y)
            acc = float(np.mean(correct))
            table[(h, k)] = acc
            if best is None or acc > best[0]:
                best = (acc, h, k)
                best_post = post
    assert best is not None
    return GridSearchResult(best[1], best[2], best[0], best_post, table)
