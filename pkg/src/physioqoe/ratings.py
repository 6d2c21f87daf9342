"""Explicit subjective-rating statistics: single-stimulus summaries with
two-sample t-tests, Pearson correlations between questions, and
paired-comparison score conversion and summaries.

The default t-test is Welch's unequal-variance variant, computed from
group summaries alone; the pooled-variance Student test is available
behind a flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sstats

from .model import RatingRecord


class RatingsError(Exception):
    pass


@dataclass(frozen=True)
class GroupSummary:
    n: int
    mean: float
    std: float  # unbiased

    def __post_init__(self) -> None:
        if self.n < 2:
            raise RatingsError(f"group needs n >= 2, got {self.n}")
        if self.std < 0:
            raise RatingsError(f"std must be non-negative, got {self.std}")


def summarize(values: np.ndarray) -> GroupSummary:
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2:
        raise RatingsError(f"need >= 2 values to summarize, got {len(values)}")
    return GroupSummary(n=len(values), mean=float(np.mean(values)), std=float(np.std(values, ddof=1)))


# Paired-comparison label vocabulary. "better" maps to +/-2 by linear
# interpolation between the +/-1 and +/-3 endpoints of the scale.
_PAIRED_MAGNITUDE = {"slightly better": 1, "better": 2, "significantly better": 3}


def convert_paired(label: str, hdr_position: str) -> int:
    """Map a 7-level comparison label to -3..3; positive means the
    tone-mapped HDR version (at ``hdr_position``, "first" or "second") was
    preferred."""
    if hdr_position not in ("first", "second"):
        raise RatingsError(f"hdr_position must be 'first' or 'second', got {hdr_position!r}")
    norm = " ".join(label.strip().lower().split())
    if norm == "same":
        return 0
    for position in ("first", "second"):
        prefix = f"the {position} video is "
        if norm.startswith(prefix):
            magnitude = _PAIRED_MAGNITUDE.get(norm[len(prefix):])
            if magnitude is None:
                break
            sign = 1 if position == hdr_position else -1
            return sign * magnitude
    raise RatingsError(f"unknown comparison label {label!r}")


def welch_t_test(a: GroupSummary, b: GroupSummary, pooled: bool = False) -> tuple[float, float, float]:
    """(t, df, two-tailed p) from group summaries.

    Welch statistic with Welch-Satterthwaite degrees of freedom by default;
    ``pooled=True`` switches to the equal-variance Student test.
    """
    va, vb = a.std**2, b.std**2
    if va == 0.0 and vb == 0.0:
        df = float(a.n + b.n - 2)
        if a.mean == b.mean:
            return 0.0, df, 1.0
        return float(np.inf) if a.mean > b.mean else float(-np.inf), df, 0.0
    if pooled:
        sp2 = ((a.n - 1) * va + (b.n - 1) * vb) / (a.n + b.n - 2)
        t = (a.mean - b.mean) / np.sqrt(sp2 * (1.0 / a.n + 1.0 / b.n))
        df = float(a.n + b.n - 2)
    else:
        se2 = va / a.n + vb / b.n
        t = (a.mean - b.mean) / np.sqrt(se2)
        df = se2**2 / ((va / a.n) ** 2 / (a.n - 1) + (vb / b.n) ** 2 / (b.n - 1))
    p = 2.0 * float(sstats.t.sf(abs(t), df))
    return float(t), float(df), p


def pcc(x: np.ndarray, y: np.ndarray) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise RatingsError(f"need equal-length 1-D arrays of >= 2 values, got {x.shape} and {y.shape}")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc @ xc) * (yc @ yc))
    if denom == 0.0:
        raise RatingsError("correlation undefined for zero-variance input")
    return float((xc @ yc) / denom)


def _safe_pcc(x: np.ndarray, y: np.ndarray) -> float | None:
    try:
        return pcc(x, y)
    except RatingsError:
        return None


def ratings_report(records: list[RatingRecord], pooled: bool = False) -> dict:
    """Single-stimulus summaries + t-tests, question PCC matrix, and
    paired-comparison means/PCC.

    Undefined correlations (constant input) come back as None with a flag;
    groups below the reference size of 20 are flagged small-n.
    """
    if not records:
        raise RatingsError("no rating records")
    questions = ("q1", "q2", "q3")
    single: dict = {}
    for q in questions:
        ldr = np.array([getattr(r, q) for r in records if r.dynamic_range == "LDR"], dtype=float)
        hdr = np.array([getattr(r, q) for r in records if r.dynamic_range == "TMHDR"], dtype=float)
        if len(ldr) < 2 or len(hdr) < 2:
            raise RatingsError(f"question {q}: need >= 2 ratings per dynamic range")
        sa, sb = summarize(ldr), summarize(hdr)
        t, df, p = welch_t_test(sa, sb, pooled=pooled)
        single[q] = {
            "ldr": {"n": sa.n, "mean": sa.mean, "std": sa.std},
            "tmhdr": {"n": sb.n, "mean": sb.mean, "std": sb.std},
            "t": t,
            "df": df,
            "p": p,
            "small_n": sa.n < 20 or sb.n < 20,
        }

    # Question correlations over all (subject, video) points.
    cols = {q: np.array([getattr(r, q) for r in records], dtype=float) for q in questions}
    question_pcc = {}
    for i, qa in enumerate(questions):
        for qb in questions[i + 1:]:
            question_pcc[f"{qa}_{qb}"] = _safe_pcc(cols[qa], cols[qb])

    # Paired-comparison scores attach to the content pair: one value per
    # (subject, content).
    pair_values: dict[tuple[str, str], tuple[int, int]] = {}
    for r in records:
        pair_values[(r.subject_id, r.content)] = (r.comp_q1, r.comp_q2)
    comp1 = np.array([v[0] for v in pair_values.values()], dtype=float)
    comp2 = np.array([v[1] for v in pair_values.values()], dtype=float)
    paired = {
        "n_pairs": len(pair_values),
        "comp_q1_mean": float(np.mean(comp1)),
        "comp_q2_mean": float(np.mean(comp2)),
        "pcc": _safe_pcc(comp1, comp2),
    }

    return {
        "n_records": len(records),
        "test_variant": "student" if pooled else "welch",
        "single_stimulus": single,
        "question_pcc": question_pcc,
        "paired_comparison": paired,
        "undefined_pcc": sorted(
            [k for k, v in question_pcc.items() if v is None]
            + (["comp_q1_q2"] if paired["pcc"] is None else [])
        ),
    }
