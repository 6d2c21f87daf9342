"""Evaluation protocols: task label derivation, metrics, and the
subject-dependent / subject-independent cross-validation harnesses.

Subject-dependent: per subject, leave-one-segment-out over its segments;
subject-independent: leave-one-subject-out. In both, every trial ranks
features on the training split, picks (hidden units, feature count) by an
inner leave-one-out grid search, trains the final network on the full
training split, and classifies the held-out data; the fusion modality
additionally searches the fusion weight on reused fold-wise unimodal
posteriors. Repetitions re-seed weight initialization only.

Per-trial RNG derives from (global seed, subject index, trial index,
repetition), so parallel execution order never changes results. In the
subject-dependent protocol all trials of one (subject, repetition) unit
share their grid-search linear algebra through one batched fit per grid
cell (example masks make each fold identical to training on its subset);
trials keep their individual seeds and rankings.
"""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sstats

from . import classify, fusion, selection
from .features import eeg_features, peripheral_features
from .model import (
    EEG_FEATURE_NAMES,
    PERIPHERAL_FEATURE_NAMES,
    ConfusionCounts,
    RatingRecord,
    Recording,
)
from .preprocess import PreprocessConfig, preprocess_recording

logger = logging.getLogger(__name__)

DEFAULT_K_GRID_EEG = (5, 10, 20, 40)
DEFAULT_K_GRID_PERI = (3, 5, 8, 13)

TASK_CLASSES = {
    "hdr": ("LDR", "TMHDR"),
    "q1": ("high", "low"),
    "q3": ("high", "low"),
}


class EvaluationError(Exception):
    pass


@dataclass(frozen=True)
class TaskSpec:
    task: str  # "hdr" | "q1" | "q3"
    threshold: int = 5
    excluded_subjects: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.task not in TASK_CLASSES:
            raise EvaluationError(f"unknown task {self.task!r}")

    @property
    def classes(self) -> tuple[str, str]:
        return TASK_CLASSES[self.task]


# ---------------------------------------------------------------------------
# Metrics


def confusion_counts(y_true: np.ndarray, y_pred: np.ndarray) -> ConfusionCounts:
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    return ConfusionCounts(
        true_a=int(np.sum((y_true == 0) & (y_pred == 0))),
        false_a=int(np.sum((y_true == 0) & (y_pred != 0))),
        true_b=int(np.sum((y_true == 1) & (y_pred == 1))),
        false_b=int(np.sum((y_true == 1) & (y_pred != 1))),
    )


def accuracy(c: ConfusionCounts) -> float:
    total = c.number_of_a + c.number_of_b
    if total == 0:
        raise EvaluationError("no predictions")
    return (c.true_a + c.true_b) / total


def balanced_accuracy(c: ConfusionCounts) -> float:
    """Mean of the two per-class recalls."""
    if c.number_of_a == 0 or c.number_of_b == 0:
        raise EvaluationError("balanced accuracy undefined for an empty class")
    return 0.5 * (c.true_a / c.number_of_a + c.true_b / c.number_of_b)


def symmetric_f_measure(c: ConfusionCounts) -> float:
    """Mean of F1 with class A positive and F1 with class B positive; a
    zero-denominator F1 counts as 0."""
    if c.number_of_a == 0 or c.number_of_b == 0:
        raise EvaluationError("F-measure undefined for an empty class")

    def f1(tp: int, fn: int, fp: int) -> float:
        denom = 2 * tp + fn + fp
        return 2 * tp / denom if denom > 0 else 0.0

    f_a = f1(c.true_a, c.false_a, c.false_b)
    f_b = f1(c.true_b, c.false_b, c.false_a)
    return 0.5 * (f_a + f_b)


def t_test_vs_chance(values: np.ndarray, chance: float = 0.5) -> float:
    """Two-tailed one-sample t-test p-value against chance level."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2:
        raise EvaluationError("need at least 2 values for a t-test")
    if np.var(values, ddof=1) == 0.0:
        if np.mean(values) == chance:
            return 1.0
        logger.warning("zero-variance metric sample away from chance; returning p=0 sentinel")
        return 0.0
    return float(sstats.ttest_1samp(values, chance).pvalue)


# ---------------------------------------------------------------------------
# Feature tables


@dataclass
class FeatureTable:
    names: tuple[str, ...]
    matrix: np.ndarray
    subject_ids: list[str]
    stimulus_ids: list[str]
    window_indices: list[int]
    dynamic_ranges: list[str]
    contents: list[str]

    def rows_of(self, subject_id: str) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.subject_ids) == subject_id)


@dataclass
class FeatureBundle:
    eeg: FeatureTable
    peri: FeatureTable
    ratings: list[RatingRecord]

    @property
    def subjects(self) -> list[str]:
        return sorted(set(self.eeg.subject_ids))


def _extract_subject(args: tuple[Recording, PreprocessConfig]) -> tuple[list, list]:
    rec, cfg = args
    segments, _ = preprocess_recording(rec, cfg)
    return [eeg_features(s) for s in segments], [peripheral_features(s) for s in segments]


def build_feature_bundle(
    recordings: list[Recording],
    ratings: list[RatingRecord],
    cfg: PreprocessConfig | None = None,
    jobs: int = 1,
) -> FeatureBundle:
    """Preprocess every recording and tabulate both feature modalities."""
    cfg = cfg or PreprocessConfig()
    recs = sorted(recordings, key=lambda r: r.subject_id)
    work = [(r, cfg) for r in recs]
    if jobs > 1 and len(recs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_extract_subject, work))
    else:
        results = [_extract_subject(w) for w in work]

    eeg_vecs: list = []
    peri_vecs: list = []
    dr_list: list[str] = []
    ct_list: list[str] = []
    for rec, (evs, pvs) in zip(recs, results):
        by_stim = {m.stimulus_id: m for m in rec.stimulus_markers()}
        eeg_vecs.extend(evs)
        peri_vecs.extend(pvs)
        for v in evs:
            m = by_stim[v.stimulus_id]
            dr_list.append(m.dynamic_range)
            ct_list.append(m.content)

    def build(vectors: list, names: tuple[str, ...]) -> FeatureTable:
        return FeatureTable(
            names=names,
            matrix=np.vstack([v.values for v in vectors]),
            subject_ids=[v.subject_id for v in vectors],
            stimulus_ids=[v.stimulus_id for v in vectors],
            window_indices=[v.window_index for v in vectors],
            dynamic_ranges=list(dr_list),
            contents=list(ct_list),
        )

    return FeatureBundle(
        eeg=build(eeg_vecs, EEG_FEATURE_NAMES),
        peri=build(peri_vecs, PERIPHERAL_FEATURE_NAMES),
        ratings=list(ratings),
    )


# ---------------------------------------------------------------------------
# Label derivation


@dataclass
class LabeledSubject:
    subject_id: str
    indices: np.ndarray
    y: np.ndarray


def derive_labels(
    bundle: FeatureBundle, task: TaskSpec
) -> tuple[list[LabeledSubject], list[str]]:
    """Per-subject example sets with 0/1 labels (0 = class A).

    Subjects whose data are single-class under the task are excluded with a
    logged notice; an empty result raises.
    """
    table = bundle.eeg
    rating_lookup = {
        (r.subject_id, r.content, r.dynamic_range): r for r in bundle.ratings
    }
    labeled: list[LabeledSubject] = []
    notices: list[str] = []
    for subject in sorted(set(table.subject_ids)):
        if subject in task.excluded_subjects:
            notices.append(f"{subject}: excluded by configuration")
            continue
        idx = table.rows_of(subject)
        y = np.empty(len(idx), dtype=int)
        for j, row in enumerate(idx):
            if task.task == "hdr":
                y[j] = 0 if table.dynamic_ranges[row] == "LDR" else 1
            else:
                key = (subject, table.contents[row], table.dynamic_ranges[row])
                rec = rating_lookup.get(key)
                if rec is None:
                    raise EvaluationError(
                        f"task {task.task} needs a rating for (subject={key[0]}, "
                        f"content={key[1]}, dynamic_range={key[2]}) but none was loaded"
                    )
                score = rec.q1 if task.task == "q1" else rec.q3
                y[j] = 0 if score > task.threshold else 1
        if len(set(y.tolist())) < 2:
            only = task.classes[int(y[0])] if len(y) else "none"
            notices.append(f"{subject}: single-class data under task {task.task} (all {only}); excluded")
            continue
        labeled.append(LabeledSubject(subject, idx, y))
    for n in notices:
        logger.info("label derivation: %s", n)
    if not labeled:
        raise EvaluationError(
            f"task {task.task} is impossible: no subject has examples of both classes"
        )
    return labeled, notices


# ---------------------------------------------------------------------------
# Trial execution


@dataclass(frozen=True)
class HarnessConfig:
    """Classifier and fusion settings shared by both protocols."""

    hidden_grid: tuple[int, ...] = (1, 2, 4, 8, 16)
    k_grid_eeg: tuple[int, ...] = DEFAULT_K_GRID_EEG
    k_grid_peri: tuple[int, ...] = DEFAULT_K_GRID_PERI
    damping_init: float = 1e-3
    damping_factor: float = 10.0
    damping_max: float = 1e10
    max_epochs: int = 200
    grad_tol: float = 1e-7
    weight_grid: tuple[float, ...] = fusion.DEFAULT_WEIGHT_GRID

    def train_config(self, seed: int) -> classify.TrainConfig:
        return classify.TrainConfig(
            hidden_grid=self.hidden_grid,
            damping_init=self.damping_init,
            damping_factor=self.damping_factor,
            damping_max=self.damping_max,
            max_epochs=self.max_epochs,
            grad_tol=self.grad_tol,
            seed=seed,
        )


def _trial_seed(global_seed: int, subject_idx: int, trial_idx: int, rep: int) -> int:
    ss = np.random.SeedSequence((global_seed, subject_idx, trial_idx, rep))
    return int(ss.generate_state(1)[0])


def _digest(*arrays: np.ndarray) -> str:
    h = hashlib.sha1()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def _normalize_raw(raw: np.ndarray) -> np.ndarray:
    """Raw sigmoid outputs -> posterior rows summing to 1 (0.5/0.5 fallback)."""
    raw = np.atleast_2d(raw)
    tot = raw.sum(axis=1, keepdims=True)
    return np.where(tot > 0, raw / np.where(tot > 0, tot, 1.0), 0.5)


def _merged_modality(
    x: np.ndarray,
    y: np.ndarray,
    names: tuple[str, ...],
    k_grid: tuple[int, ...],
    harness: HarnessConfig,
    seeds: list[int],
    need_loo: bool,
) -> dict[int, dict]:
    """All leave-one-segment-out trials of one (subject, repetition) for one
    modality, with the grid search batched across trials per grid cell.

    Returns {trial: fit info} where fit info either carries an "error" or
    the chosen cell, selected features, test posterior, and (when requested)
    the chosen cell's fold-wise LOO posteriors.
    """
    n, d = x.shape
    results: dict[int, dict] = {}
    if n < 4:
        msg = f"{n} segments is too few for the leave-one-out grid search"
        return {t: {"error": msg} for t in range(n)}
    k_grid = tuple(sorted({k for k in k_grid if k <= d})) or (d,)
    kmax = max(k_grid)
    cells = [(h, k) for h in sorted(harness.hidden_grid) for k in k_grid]
    targets = np.zeros((n, 2))
    targets[np.arange(n), y] = 1.0
    cfg0 = harness.train_config(0)
    name_idx = {m: i for i, m in enumerate(names)}

    rankings = np.zeros((n, kmax), dtype=int)
    for t in range(n):
        rows = np.arange(n) != t
        try:
            ranked = selection.rank_and_select(x[rows], y[rows], names, k=d)
        except selection.SelectionError as e:
            results[t] = {"error": str(e)}
            continue
        rankings[t] = [name_idx[m] for m in ranked[:kmax]]
    ok_trials = [t for t in range(n) if t not in results]
    if not ok_trials:
        return results

    # Inner folds (t, j): exclude the outer test row t and the inner row j.
    inner_t = np.repeat(np.arange(n), n - 1)
    inner_j = np.concatenate([np.delete(np.arange(n), t) for t in range(n)])
    n_folds = len(inner_t)
    masks_inner = np.ones((n_folds, n))
    masks_inner[np.arange(n_folds), inner_t] = 0.0
    masks_inner[np.arange(n_folds), inner_j] = 0.0

    # Standardized design tensors at kmax; a cell with k features uses the
    # column prefix (statistics are per-column, so prefixes are exact).
    xs_inner = np.empty((n_folds, n, kmax))
    for t in range(n):
        xt = x[:, rankings[t]]
        block = slice(t * (n - 1), (t + 1) * (n - 1))
        mean, std = classify._standardize_stats(xt, masks_inner[block])
        xs_inner[block] = (xt[None] - mean[:, None, :]) / std[:, None, :]

    run_search = len(cells) > 1 or need_loo
    loo_acc: dict[tuple[int, int], np.ndarray] = {}
    loo_posts: dict[tuple[int, int], np.ndarray] = {}
    if run_search:
        y_inner = y[inner_j].reshape(n, n - 1)
        for h, k in cells:
            init = np.vstack([classify._init_theta(k, h, seeds[t]) for t in range(n)])
            theta0 = np.repeat(init, n - 1, axis=0)
            theta, failed = classify.fit_fold_batch(
                xs_inner[..., :k], targets, masks_inner, h, cfg0, theta0
            )
            out, _ = classify._forward(xs_inner[..., :k], theta, k, h)
            posts = _normalize_raw(out[np.arange(n_folds), inner_j])
            posts[failed] = np.nan
            per_trial = posts.reshape(n, n - 1, 2)
            correct = np.isfinite(per_trial[..., 0]) & (
                np.argmax(np.nan_to_num(per_trial, nan=-1.0), axis=2) == y_inner
            )
            loo_acc[(h, k)] = correct.mean(axis=1)
            loo_posts[(h, k)] = per_trial

    chosen: dict[int, tuple[int, int]] = {}
    for t in ok_trials:
        if len(cells) == 1:
            chosen[t] = cells[0]
            continue
        best: tuple[float, tuple[int, int]] | None = None
        for cell in cells:  # ascending (hidden_n, k): ties keep the smaller
            acc = float(loo_acc[cell][t])
            if best is None or acc > best[0]:
                best = (acc, cell)
        chosen[t] = best[1]

    # Final models on the full training split, grouped by chosen cell.
    masks_outer = np.ones((n, n))
    np.fill_diagonal(masks_outer, 0.0)
    xs_outer = np.empty((n, n, kmax))
    for t in range(n):
        xt = x[:, rankings[t]]
        mean, std = classify._standardize_stats(xt, masks_outer[t: t + 1])
        xs_outer[t] = (xt - mean[0]) / std[0]

    groups: dict[tuple[int, int], list[int]] = {}
    for t in ok_trials:
        groups.setdefault(chosen[t], []).append(t)
    for (h, k), ts in sorted(groups.items()):
        theta0 = np.vstack([classify._init_theta(k, h, seeds[t]) for t in ts])
        theta, failed = classify.fit_fold_batch(
            xs_outer[ts][..., :k], targets, masks_outer[ts], h, cfg0, theta0
        )
        out, _ = classify._forward(xs_outer[ts][..., :k], theta, k, h)
        for i, t in enumerate(ts):
            if failed[i]:
                results[t] = {"error": "damped normal equations singular beyond the damping cap"}
                continue
            results[t] = {
                "selected": [names[c] for c in rankings[t][:k]],
                "hidden_n": h,
                "k": k,
                "loo_accuracy": float(loo_acc[(h, k)][t]) if (h, k) in loo_acc else None,
                "posterior": _normalize_raw(out[i, t])[0],
                "loo_posteriors": loo_posts.get((h, k), [None] * n)[t],
                "digest": _digest(theta[i]),
            }
    return results


def _fit_modality(
    x_train: np.ndarray,
    y_train: np.ndarray,
    names: tuple[str, ...],
    k_grid: tuple[int, ...],
    cfg: classify.TrainConfig,
    need_loo: bool,
) -> dict:
    """Rank, grid-search, and train one modality on a training split."""
    ranking = selection.rank_and_select(x_train, y_train, names, k=x_train.shape[1])
    name_to_idx = {n: i for i, n in enumerate(names)}
    ranking_idx = np.array([name_to_idx[n] for n in ranking])
    gs = classify.grid_search(x_train, y_train, ranking_idx, cfg, k_grid)
    loo_post = gs.posteriors
    if need_loo and loo_post is None:
        loo_post = classify.loo_posteriors(
            x_train[:, ranking_idx[: gs.k]], y_train, gs.hidden_n, cfg
        )
    cols = ranking_idx[: gs.k]
    model = classify.train_mlp(
        x_train[:, cols], y_train, gs.hidden_n, cfg,
        feature_names=tuple(ranking[: gs.k]),
    )
    return {
        "model": model,
        "cols": cols,
        "selected": ranking[: gs.k],
        "hidden_n": gs.hidden_n,
        "k": gs.k,
        "loo_accuracy": gs.loo_accuracy if np.isfinite(gs.loo_accuracy) else None,
        "loo_posteriors": loo_post,
        "digest": _digest(model.w1, model.b1, model.w2, model.b2, model.mean, model.std),
    }


def _run_dep_unit(args: dict) -> list[dict]:
    """One (subject, repetition) of the subject-dependent protocol."""
    modality = args["modality"]
    harness: HarnessConfig = args["harness"]
    rep, seed = args["rep"], args["seed"]
    subject, subject_idx = args["subject"], args["subject_idx"]
    x_eeg, x_peri, y = args["x_eeg"], args["x_peri"], args["y"]
    n = len(y)
    seeds = [_trial_seed(seed, subject_idx, t, rep) for t in range(n)]

    fits_e = fits_p = None
    if modality in ("eeg", "fusion"):
        fits_e = _merged_modality(x_eeg, y, EEG_FEATURE_NAMES, harness.k_grid_eeg,
                                  harness, seeds, need_loo=(modality == "fusion"))
    if modality in ("peri", "fusion"):
        fits_p = _merged_modality(x_peri, y, PERIPHERAL_FEATURE_NAMES, harness.k_grid_peri,
                                  harness, seeds, need_loo=(modality == "fusion"))

    records = []
    for t in range(n):
        record = {"subject": subject, "rep": rep, "trial": int(t), "true": [int(y[t])]}
        errors = [f[t]["error"] for f in (fits_e, fits_p) if f is not None and "error" in f[t]]
        if errors:
            record["error"] = "; ".join(errors)
            record["predicted"] = [1 - int(y[t])]
            records.append(record)
            continue
        if fits_e is not None:
            record["eeg"] = {k: fits_e[t][k] for k in ("selected", "hidden_n", "k", "loo_accuracy", "digest")}
        if fits_p is not None:
            record["peri"] = {k: fits_p[t][k] for k in ("selected", "hidden_n", "k", "loo_accuracy", "digest")}
        if modality == "eeg":
            post = fits_e[t]["posterior"]
            record["posteriors"] = [post.tolist()]
            record["predicted"] = [int(np.argmax(post))]
        elif modality == "peri":
            post = fits_p[t]["posterior"]
            record["posteriors"] = [post.tolist()]
            record["predicted"] = [int(np.argmax(post))]
        else:
            y_train = np.delete(y, t)
            try:
                w = fusion.grid_search_weight(
                    fits_e[t]["loo_posteriors"], fits_p[t]["loo_posteriors"], y_train,
                    harness.weight_grid,
                )
                pe, pp = fits_e[t]["posterior"], fits_p[t]["posterior"]
                record["weight"] = w
                record["posteriors_eeg"] = [pe.tolist()]
                record["posteriors_peri"] = [pp.tolist()]
                record["predicted"] = [int(fusion.fuse_decisions(pe[None], pp[None], w)[0])]
            except fusion.FusionError as exc:
                record["error"] = str(exc)
                record["predicted"] = [1 - int(y[t])]
        records.append(record)
    return records


def _run_indep_unit(args: dict) -> list[dict]:
    """One (held-out subject, repetition) of the subject-independent
    protocol; the held-out subject is the single trial."""
    modality = args["modality"]
    harness: HarnessConfig = args["harness"]
    rep, seed = args["rep"], args["seed"]
    subject, subject_idx = args["subject"], args["subject_idx"]
    cfg = harness.train_config(_trial_seed(seed, subject_idx, 0, rep))
    e_tr, p_tr, y_tr = args["train_eeg"], args["train_peri"], args["train_y"]
    e_te, p_te, y_te = args["x_eeg"], args["x_peri"], args["y"]

    record = {"subject": subject, "rep": rep, "trial": 0, "true": [int(v) for v in y_te]}
    try:
        need_loo = modality == "fusion"
        if modality in ("eeg", "fusion"):
            fit_e = _fit_modality(e_tr, y_tr, EEG_FEATURE_NAMES, harness.k_grid_eeg, cfg, need_loo)
            post_e = np.vstack([classify.predict(fit_e["model"], row[fit_e["cols"]]) for row in e_te])
            record["eeg"] = {k: fit_e[k] for k in ("selected", "hidden_n", "k", "loo_accuracy", "digest")}
        if modality in ("peri", "fusion"):
            fit_p = _fit_modality(p_tr, y_tr, PERIPHERAL_FEATURE_NAMES, harness.k_grid_peri, cfg, need_loo)
            post_p = np.vstack([classify.predict(fit_p["model"], row[fit_p["cols"]]) for row in p_te])
            record["peri"] = {k: fit_p[k] for k in ("selected", "hidden_n", "k", "loo_accuracy", "digest")}
        if modality == "eeg":
            record["posteriors"] = post_e.tolist()
            record["predicted"] = [int(v) for v in np.argmax(post_e, axis=1)]
        elif modality == "peri":
            record["posteriors"] = post_p.tolist()
            record["predicted"] = [int(v) for v in np.argmax(post_p, axis=1)]
        else:
            w = fusion.grid_search_weight(
                fit_e["loo_posteriors"], fit_p["loo_posteriors"], y_tr, harness.weight_grid
            )
            record["weight"] = w
            record["posteriors_eeg"] = post_e.tolist()
            record["posteriors_peri"] = post_p.tolist()
            record["predicted"] = [int(v) for v in fusion.fuse_decisions(post_e, post_p, w)]
    except (classify.TrainingError, selection.SelectionError, fusion.FusionError) as exc:
        record["error"] = str(exc)
        record["predicted"] = [1 - int(v) for v in y_te]
    return [record]


def _run_unit(args: dict) -> list[dict]:
    if args["scenario"] == "dep":
        return _run_dep_unit(args)
    return _run_indep_unit(args)


# ---------------------------------------------------------------------------
# Protocol drivers


@dataclass
class EvaluationReport:
    task: str
    scenario: str
    modality: str
    reps: int
    seed: int
    classes: tuple[str, str]
    subjects: list[str]
    exclusions: list[str]
    trials: list[dict]
    per_subject_rep: list[dict]
    per_rep: list[dict]
    summary: dict
    p_values: dict
    selection_eeg: dict = field(default_factory=dict)
    selection_peri: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "scenario": self.scenario,
            "modality": self.modality,
            "reps": self.reps,
            "seed": self.seed,
            "classes": list(self.classes),
            "subjects": self.subjects,
            "exclusions": self.exclusions,
            "config": self.config,
            "summary": self.summary,
            "p_values": self.p_values,
            "per_rep": self.per_rep,
            "per_subject_rep": self.per_subject_rep,
            "selection_eeg": self.selection_eeg,
            "selection_peri": self.selection_peri,
            "trials": self.trials,
        }


def _metrics_from(y_true: list[int], y_pred: list[int]) -> dict:
    c = confusion_counts(np.array(y_true), np.array(y_pred))
    out = {"accuracy": accuracy(c)}
    try:
        out["balanced_accuracy"] = balanced_accuracy(c)
        out["f_measure"] = symmetric_f_measure(c)
    except EvaluationError:
        # Single-class test slice; plain accuracy is the only defined metric.
        out["balanced_accuracy"] = out["accuracy"]
        out["f_measure"] = out["accuracy"]
    return out


def _aggregate(
    records: list[dict],
    subjects: list[str],
    reps: int,
) -> tuple[list[dict], list[dict], dict, dict]:
    per_subject_rep = []
    for subject in subjects:
        for rep in range(reps):
            y_t: list[int] = []
            y_p: list[int] = []
            for r in records:
                if r["subject"] == subject and r["rep"] == rep:
                    y_t.extend(r["true"])
                    y_p.extend(r["predicted"])
            m = _metrics_from(y_t, y_p)
            per_subject_rep.append({"subject": subject, "rep": rep, **m})

    metric_names = ("accuracy", "balanced_accuracy", "f_measure")
    per_rep = []
    for rep in range(reps):
        vals = [r for r in per_subject_rep if r["rep"] == rep]
        per_rep.append({"rep": rep, **{m: float(np.mean([v[m] for v in vals])) for m in metric_names}})

    summary = {
        m: {
            "mean": float(np.mean([r[m] for r in per_rep])),
            "std": float(np.std([r[m] for r in per_rep], ddof=1)) if reps > 1 else 0.0,
        }
        for m in metric_names
    }
    p_values = {}
    for m in metric_names:
        per_subject_means = [
            float(np.mean([r[m] for r in per_subject_rep if r["subject"] == s]))
            for s in subjects
        ]
        try:
            p_values[m] = t_test_vs_chance(np.array(per_subject_means))
        except EvaluationError:
            p_values[m] = None
    return per_subject_rep, per_rep, summary, p_values


def _selection_summaries(records: list[dict], modality: str) -> tuple[dict, dict]:
    def gather(key: str, mod: str) -> dict:
        logs = [r[key]["selected"] for r in records if key in r]
        if not logs:
            return {}
        rep = selection.selection_report(logs, modality=mod)
        return {
            "n_trials": rep.n_trials,
            "feature_counts": rep.feature_counts,
            "feature_frequencies": rep.feature_frequencies,
            "band_counts": rep.band_counts,
            "band_frequencies": rep.band_frequencies,
            "electrode_counts": rep.electrode_counts,
            "sensor_counts": rep.sensor_counts,
            "sensor_frequencies": rep.sensor_frequencies,
        }

    eeg = gather("eeg", "EEG") if modality in ("eeg", "fusion") else {}
    peri = gather("peri", "PERIPHERAL") if modality in ("peri", "fusion") else {}
    return eeg, peri


def _run_protocol(
    bundle: FeatureBundle,
    task: TaskSpec,
    scenario: str,
    modality: str,
    reps: int,
    seed: int,
    harness: HarnessConfig,
    jobs: int,
) -> EvaluationReport:
    if modality not in ("eeg", "peri", "fusion"):
        raise EvaluationError(f"unknown modality {modality!r}")
    labeled, notices = derive_labels(bundle, task)
    if scenario == "indep" and len(labeled) < 2:
        raise EvaluationError("subject-independent evaluation needs at least 2 subjects")
    for sub in labeled:
        if scenario == "dep" and len(sub.indices) < 2:
            raise EvaluationError(f"subject {sub.subject_id} has fewer than 2 segments")

    subjects = [s.subject_id for s in labeled]
    units = []
    for si, sub in enumerate(labeled):
        x_eeg = bundle.eeg.matrix[sub.indices]
        x_peri = bundle.peri.matrix[sub.indices]
        for rep in range(reps):
            unit = {
                "scenario": scenario,
                "modality": modality,
                "harness": harness,
                "rep": rep,
                "seed": seed,
                "subject_idx": si,
                "subject": sub.subject_id,
                "x_eeg": x_eeg,
                "x_peri": x_peri,
                "y": sub.y,
            }
            if scenario == "indep":
                others = [o for o in labeled if o.subject_id != sub.subject_id]
                unit["train_eeg"] = np.vstack([bundle.eeg.matrix[o.indices] for o in others])
                unit["train_peri"] = np.vstack([bundle.peri.matrix[o.indices] for o in others])
                unit["train_y"] = np.concatenate([o.y for o in others])
            units.append(unit)

    if jobs > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            unit_records = list(pool.map(_run_unit, units))
    else:
        unit_records = [_run_unit(u) for u in units]
    records = [r for unit in unit_records for r in unit]
    records.sort(key=lambda r: (r["subject"], r["rep"], r["trial"]))

    for r in records:
        if "error" in r:
            logger.warning("trial failed (%s rep %s trial %s): %s",
                           r["subject"], r["rep"], r["trial"], r["error"])

    per_subject_rep, per_rep, summary, p_values = _aggregate(records, subjects, reps)
    sel_eeg, sel_peri = _selection_summaries(records, modality)
    return EvaluationReport(
        task=task.task,
        scenario=scenario,
        modality=modality,
        reps=reps,
        seed=seed,
        classes=task.classes,
        subjects=subjects,
        exclusions=notices,
        trials=records,
        per_subject_rep=per_subject_rep,
        per_rep=per_rep,
        summary=summary,
        p_values=p_values,
        selection_eeg=sel_eeg,
        selection_peri=sel_peri,
    )


def run_subject_dependent(
    bundle: FeatureBundle,
    task: TaskSpec,
    modality: str = "eeg",
    reps: int = 10,
    seed: int = 0,
    harness: HarnessConfig | None = None,
    jobs: int = 1,
) -> EvaluationReport:
    return _run_protocol(bundle, task, "dep", modality, reps, seed, harness or HarnessConfig(), jobs)


def run_subject_independent(
    bundle: FeatureBundle,
    task: TaskSpec,
    modality: str = "eeg",
    reps: int = 10,
    seed: int = 0,
    harness: HarnessConfig | None = None,
    jobs: int = 1,
) -> EvaluationReport:
    return _run_protocol(bundle, task, "indep", modality, reps, seed, harness or HarnessConfig(), jobs)
