"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Criterion 3 (and 7, which reuses its run) is the expensive one: two
5-subject datasets, 10 repetitions each. Its runtime bound refers to
laptop-class hardware; the assertion normalizes the measured wall time to a
4-core baseline so the same gate runs on smaller CI boxes.
"""

import json
import os
import time

import numpy as np
import pytest

from physioqoe import classify, evaluate as ev, fusion, synth
from physioqoe.cli import main as cli_main
from physioqoe.features import BANDS, band_power, pleth_features, welch_psd
from physioqoe.ica import ica_artifact_reject
from physioqoe.model import EEG_FEATURE_NAMES
from physioqoe.ratings import GroupSummary, welch_t_test
from physioqoe.selection import rank_and_select

JOBS = max(os.cpu_count() or 1, 1)


def report_line(criterion: int, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


# ---------------------------------------------------------------------------
# Criterion 1: metric oracle equivalence, exhaustive counts <= 20.


def test_criterion_1_metric_oracle_equivalence():
    t0 = time.time()
    vals = np.arange(21)
    ta, fa, tb, fb = [g.ravel().astype(float) for g in np.meshgrid(vals, vals, vals, vals, indexing="ij")]
    keep = (ta + fa > 0) & (tb + fb > 0)
    ta, fa, tb, fb = ta[keep], fa[keep], tb[keep], fb[keep]

    ba = 0.5 * (ta / (ta + fa) + tb / (tb + fb))
    # Independent derivation: one minus the mean miss rate.
    ba_oracle = 1.0 - 0.5 * (fa / (ta + fa) + fb / (tb + fb))

    def f1_direct(tp, fn, fp):
        denom = 2 * tp + fn + fp
        out = np.zeros_like(tp)
        nz = denom > 0
        out[nz] = 2 * tp[nz] / denom[nz]
        return out

    def f1_oracle(tp, fn, fp):
        # Precision/recall harmonic mean with explicit zero guards.
        out = np.zeros_like(tp)
        pred_pos = tp + fp
        actual_pos = tp + fn
        nz = (pred_pos > 0) & (actual_pos > 0)
        prec = np.zeros_like(tp)
        rec = np.zeros_like(tp)
        prec[nz] = tp[nz] / pred_pos[nz]
        rec[nz] = tp[nz] / actual_pos[nz]
        both = nz & (prec + rec > 0)
        out[both] = 2 * prec[both] * rec[both] / (prec[both] + rec[both])
        return out

    fm = 0.5 * (f1_direct(ta, fa, fb) + f1_direct(tb, fb, fa))
    fm_oracle = 0.5 * (f1_oracle(ta, fa, fb) + f1_oracle(tb, fb, fa))

    ba_err = float(np.max(np.abs(ba - ba_oracle)))
    fm_err = float(np.max(np.abs(fm - fm_oracle)))

    # Pure-python spot check through the implementation under test.
    rng = np.random.default_rng(0)
    from physioqoe.model import ConfusionCounts

    for i in rng.choice(len(ta), size=2000, replace=False):
        c = ConfusionCounts(int(ta[i]), int(fa[i]), int(tb[i]), int(fb[i]))
        assert abs(ev.balanced_accuracy(c) - ba[i]) < 1e-12
        assert abs(ev.symmetric_f_measure(c) - fm[i]) < 1e-12

    elapsed = time.time() - t0
    ok = ba_err < 1e-12 and fm_err < 1e-12 and elapsed < 60
    report_line(1, ok, f"{len(ta)} cases, max err balacc {ba_err:.2e} / F {fm_err:.2e}, {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------------------
# Criterion 2: reference t-test table reproduction.


def test_criterion_2_table_reproduction():
    t0 = time.time()
    table = {
        "q1": ((20, 5.85, 2.01), (20, 6.65, 2.03), 0.2181),
        "q2": ((20, 5.80, 2.07), (20, 7.00, 1.21), 0.0326),
        "q3": ((20, 5.70, 1.92), (20, 6.90, 1.62), 0.0394),
    }
    errs = {}
    for q, (a, b, p_ref) in table.items():
        _, _, p = welch_t_test(GroupSummary(*a), GroupSummary(*b))
        errs[q] = abs(p - p_ref)
    elapsed = time.time() - t0
    ok = all(e <= 0.005 for e in errs.values()) and elapsed < 1.0
    report_line(2, ok, ", ".join(f"{q} |dp|={e:.4f}" for q, e in errs.items()) + f", {elapsed:.3f}s")
    assert ok


# ---------------------------------------------------------------------------
# Criteria 3 and 7 share one expensive end-to-end run.


@pytest.fixture(scope="module")
def end_to_end_runs():
    runs = {}
    t0 = time.time()
    for label, db in (("effect", 3.0), ("control", 0.0)):
        spec = synth.GeneratorSpec(n_subjects=5, seed=42, effect=synth.EffectSpec(power_ratio_db=db))
        recordings, ratings, _ = synth.generate_dataset(spec)
        bundle = ev.build_feature_bundle(recordings, ratings, jobs=JOBS)
        runs[label] = ev.run_subject_dependent(
            bundle, ev.TaskSpec("hdr"), modality="eeg", reps=10, seed=7, jobs=JOBS,
        )
        if label == "effect":
            runs["fusion"] = ev.run_subject_dependent(
                bundle, ev.TaskSpec("hdr"), modality="fusion", reps=1, seed=7, jobs=JOBS,
            )
    runs["elapsed"] = time.time() - t0
    return runs


def test_criterion_3_end_to_end_discrimination(end_to_end_runs):
    effect_acc = end_to_end_runs["effect"].summary["accuracy"]["mean"]
    control_acc = end_to_end_runs["control"].summary["accuracy"]["mean"]
    elapsed = end_to_end_runs["elapsed"]
    # The runtime bound refers to a laptop (>= 4 cores); normalize when the
    # host has fewer.
    budget = 15 * 60 * max(1.0, 4.0 / JOBS)
    effect_ok = effect_acc >= 0.85
    control_ok = 0.40 <= control_acc <= 0.60
    time_ok = elapsed < budget
    ok = effect_ok and control_ok and time_ok
    report_line(
        3, ok,
        f"effect mean accuracy {effect_acc:.3f} (>=0.85: {effect_ok}), "
        f"zero-effect control {control_acc:.3f} (in [0.40, 0.60]: {control_ok}), "
        f"wall {elapsed / 60:.1f} min on {JOBS} cpu(s) (budget {budget / 60:.0f} min: {time_ok})",
    )
    assert effect_ok, f"effect-run mean accuracy {effect_acc:.3f} below 0.85"
    assert time_ok, f"runtime {elapsed / 60:.1f} min over budget"
    assert control_ok, f"zero-effect control accuracy {control_acc:.3f} outside 50% +/- 10%"


# ---------------------------------------------------------------------------
# Criterion 4: spectral correctness.


def test_criterion_4_spectral_correctness():
    t = np.arange(2560) / 256.0
    x = np.sin(2 * np.pi * 10.0 * t)
    psd = welch_psd(x)
    total = sum(band_power(psd, BANDS[b]) for b in ("theta", "alpha", "beta", "gamma"))
    share = band_power(psd, BANDS["alpha"]) / total

    rng = np.random.default_rng(1)
    y = x + 0.2 * rng.standard_normal(2560)
    p1 = {b: band_power(welch_psd(y), BANDS[b]) for b in BANDS}
    p2 = {b: band_power(welch_psd(2.5 * y), BANDS[b]) for b in BANDS}
    scale_err = max(abs(p2[b] - 6.25 * p1[b]) / (6.25 * p1[b]) for b in BANDS)

    ok = share >= 0.95 and scale_err < 1e-6
    report_line(4, ok, f"alpha share {share:.4f}, scaling rel err {scale_err:.2e}")
    assert ok


# ---------------------------------------------------------------------------
# Criterion 5: pulse features.


def test_criterion_5_pulse_features():
    rng = np.random.default_rng(2)
    x = synth._pulse_train(rng, 2560, np.full(2560, 72.0), 0.0)
    hrm, _, _, hrvstd = pleth_features(x, 256.0)
    ok = abs(hrm - 72.0) <= 1.0 and hrvstd < 0.5
    report_line(5, ok, f"HRM {hrm:.2f} bpm (|err| {abs(hrm - 72.0):.2f}), HRVStd {hrvstd:.3f}")
    assert ok


# ---------------------------------------------------------------------------
# Criterion 6: Fisher selection power.


def test_criterion_6_fisher_selection_power():
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((60, 124))
        y = np.array([0] * 30 + [1] * 30)
        x[y == 1, 37] += 2.0  # 2 pooled-sigma shift
        if rank_and_select(x, y, EEG_FEATURE_NAMES, 5)[0] == EEG_FEATURE_NAMES[37]:
            hits += 1
    ok = hits >= 95
    report_line(6, ok, f"shifted feature ranked first in {hits}/100 seeds")
    assert ok


# ---------------------------------------------------------------------------
# Criterion 7: fusion degeneracy over the end-to-end run's test examples.


def test_criterion_7_fusion_degeneracy(end_to_end_runs):
    trials = [t for t in end_to_end_runs["fusion"].trials if "error" not in t]
    assert trials, "fusion run produced no usable trials"
    n_checked = 0
    log_err = 0.0
    for t in trials:
        for pe_list, pp_list in zip(t["posteriors_eeg"], t["posteriors_peri"]):
            pe, pp = np.array(pe_list), np.array(pp_list)
            d1 = fusion.fuse(pe, pp, 1.0)
            d0 = fusion.fuse(pe, pp, 0.0)
            assert d1.decided_class == int(np.argmax(pe))
            assert d0.decided_class == int(np.argmax(pp))
            if np.all(pe > 0) and np.all(pp > 0):
                w = t["weight"]
                d = fusion.fuse(pe, pp, w)
                for i in range(2):
                    lhs = np.log(d.scores[i])
                    rhs = w * np.log(max(pe[i], 1e-12)) + (1 - w) * np.log(max(pp[i], 1e-12))
                    log_err = max(log_err, abs(lhs - rhs))
            n_checked += 1
    ok = log_err < 1e-12
    report_line(7, ok, f"{n_checked} test examples, degenerate weights exact, log-linearity err {log_err:.2e}")
    assert ok


# ---------------------------------------------------------------------------
# Criterion 8: ICA artifact removal over 100 seeds.


def test_criterion_8_ica_artifact_removal():
    from test_ica import make_mixture, max_abs_corr

    t0 = time.time()
    hits = 0
    eligible = 0
    for seed in range(100):
        eeg, eog = make_mixture(seed=seed)
        if max_abs_corr(eeg, eog) < 0.6:
            continue  # construction did not reach the stated contamination
        eligible += 1
        try:
            clean, _ = ica_artifact_reject(eeg, eog, threshold=0.6)
        except Exception:
            continue
        if max_abs_corr(clean, eog) <= 0.1:
            hits += 1
    ok = eligible >= 95 and hits >= 95
    report_line(8, ok, f"{hits}/{eligible} contaminated mixtures cleaned below 0.1 "
                       f"({time.time() - t0:.0f}s)")
    assert ok


# ---------------------------------------------------------------------------
# Criterion 9: LM correctness.


def test_criterion_9_lm_correctness():
    rng = np.random.default_rng(6)
    h_fd = 1e-5
    worst = 0.0
    for _ in range(50):
        n, d, h = rng.integers(4, 9), rng.integers(1, 5), rng.integers(1, 4)
        xs = rng.normal(size=(1, n, d))
        targets = np.zeros((n, 2))
        targets[np.arange(n), rng.integers(0, 2, n)] = 1.0
        mask = np.ones((1, n))
        theta = rng.uniform(-0.5, 0.5, size=(1, classify._param_count(d, h)))
        out, hid = classify._forward(xs, theta, d, h)
        dy, gate = classify._gate_terms(hid, out, theta, mask, d, h)
        jac = classify._jacobian(xs, hid, dy, gate, d, h)[0]
        fd = np.zeros_like(jac)
        for p in range(theta.shape[1]):
            tp, tm = theta.copy(), theta.copy()
            tp[0, p] += h_fd
            tm[0, p] -= h_fd
            rp = (classify._forward(xs, tp, d, h)[0] - targets[None]).reshape(-1)
            rm = (classify._forward(xs, tm, d, h)[0] - targets[None]).reshape(-1)
            fd[:, p] = (rp - rm) / (2 * h_fd)
        worst = max(worst, float(np.linalg.norm(jac - fd) / np.linalg.norm(fd)))

    rng2 = np.random.default_rng(1)
    base = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    x = np.vstack([base + rng2.normal(0, 0.05, base.shape) for _ in range(50)])
    y = np.tile([0, 1, 1, 0], 50)
    model = classify.train_mlp(x, y, 4, classify.TrainConfig(seed=123))
    preds = [int(np.argmax(classify.predict(model, row))) for row in x]
    xor_acc = float(np.mean(np.array(preds) == y))

    ok = worst < 1e-4 and xor_acc >= 0.95
    report_line(9, ok, f"Jacobian rel err {worst:.2e} over 50 nets, XOR accuracy {xor_acc:.3f}")
    assert ok


# ---------------------------------------------------------------------------
# Criterion 10: byte-identical reports from identical CLI runs.


def test_criterion_10_determinism(tmp_path):
    spec = {
        "n_subjects": 2,
        "layout": [["hall", 20.0], ["window", 20.0]],
        "seed": 4,
        "effect": {"power_ratio_db": 6.0, "hr_offset_bpm": 6.0},
    }
    spec_file = tmp_path / "spec.json"
    spec_file.write_text(json.dumps(spec))
    assert cli_main(["synth", str(spec_file), "--out", str(tmp_path / "data")]) == 0
    cfg = tmp_path / "cfg"
    cfg.write_text("classify.hidden_grid = [2, 4]\nselection.k_grid_eeg = [5, 10]\nselection.k_grid_peri = [3, 5]\n")
    outs = []
    for name in ("r1", "r2"):
        code = cli_main([
            "evaluate", str(tmp_path / "data"), "--task", "hdr", "--scenario", "dep",
            "--modality", "fusion", "--reps", "2", "--seed", "17",
            "--jobs", "2", "--config", str(cfg), "--out", str(tmp_path / name),
        ])
        assert code == 0
        outs.append((tmp_path / name / "report.json").read_bytes())
    ok = outs[0] == outs[1]
    report_line(10, ok, f"report.json {len(outs[0])} bytes, byte-identical: {ok}")
    assert ok
