import copy

import numpy as np
import pytest

from physioqoe import evaluate as ev
from physioqoe import synth
from physioqoe.model import ConfusionCounts, RatingRecord

from conftest import SMALL_HARNESS, small_bundle


class TestMetrics:
    def test_balanced_accuracy_direct(self):
        assert ev.balanced_accuracy(ConfusionCounts(8, 2, 3, 2)) == pytest.approx(0.7)

    def test_balanced_accuracy_perfect(self):
        assert ev.balanced_accuracy(ConfusionCounts(10, 0, 5, 0)) == 1.0

    def test_majority_prediction_is_half(self):
        # All-majority predictions on an 8/2 split.
        assert ev.balanced_accuracy(ConfusionCounts(8, 0, 0, 2)) == 0.5

    def test_balanced_equals_plain_on_balanced_sets(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            y = np.array([0] * 9 + [1] * 9)
            p = rng.integers(0, 2, 18)
            c = ev.confusion_counts(y, p)
            assert ev.balanced_accuracy(c) == pytest.approx(ev.accuracy(c), abs=1e-12)

    def test_empty_class_rejected(self):
        with pytest.raises(ev.EvaluationError):
            ev.balanced_accuracy(ConfusionCounts(5, 0, 0, 0))

    def test_f_measure_direct(self):
        assert ev.symmetric_f_measure(ConfusionCounts(8, 2, 3, 2)) == pytest.approx(0.7)

    def test_f_measure_perfect(self):
        assert ev.symmetric_f_measure(ConfusionCounts(7, 0, 7, 0)) == 1.0

    def test_f_measure_single_class_prediction(self):
        # Balanced set, everything predicted class A: (2/3 + 0) / 2.
        n = 6
        c = ev.confusion_counts(np.array([0] * n + [1] * n), np.zeros(2 * n, dtype=int))
        assert ev.symmetric_f_measure(c) == pytest.approx(1.0 / 3.0)

    def test_exhaustive_oracle_equivalence_small(self):
        # Brute-force oracle over a small grid here; the exhaustive <=20
        # sweep runs in the acceptance suite.
        for ta in range(0, 7):
            for fa in range(0, 7):
                for tb in range(0, 7):
                    for fb in range(0, 7):
                        if ta + fa == 0 or tb + fb == 0:
                            continue
                        c = ConfusionCounts(ta, fa, tb, fb)
                        recall_a = ta / (ta + fa)
                        recall_b = tb / (tb + fb)
                        assert abs(ev.balanced_accuracy(c) - (recall_a + recall_b) / 2) < 1e-12

    def test_t_test_values(self):
        assert ev.t_test_vs_chance(np.array([0.5, 0.5, 0.5])) == 1.0
        assert ev.t_test_vs_chance(np.array([0.7, 0.7])) == 0.0
        p = ev.t_test_vs_chance(np.array([0.9, 0.92, 0.88, 0.91]))
        assert p < 0.001
        with pytest.raises(ev.EvaluationError):
            ev.t_test_vs_chance(np.array([0.9]))


def make_ratings(subjects, q3_by_subject):
    """One rating row per (subject, content, dynamic range)."""
    out = []
    for s in subjects:
        for content in ("hall", "window"):
            for dr in ("LDR", "TMHDR"):
                q3 = q3_by_subject[s][dr]
                out.append(RatingRecord(s, content, dr, 5, 5, q3, 0, 0))
    return out


class TestDeriveLabels:
    def test_hdr_labels_from_dynamic_range(self, effect_bundle):
        task = ev.TaskSpec("hdr")
        labeled, notices = ev.derive_labels(effect_bundle, task)
        assert [s.subject_id for s in labeled] == effect_bundle.subjects
        sub = labeled[0]
        for row, label in zip(sub.indices, sub.y):
            dr = effect_bundle.eeg.dynamic_ranges[row]
            assert label == (0 if dr == "LDR" else 1)

    def test_q3_threshold_strictly_greater(self, effect_bundle):
        subjects = effect_bundle.subjects
        # q3 == 5 must land in the low class.
        ratings = make_ratings(subjects, {s: {"LDR": 5, "TMHDR": 7} for s in subjects})
        bundle = ev.FeatureBundle(effect_bundle.eeg, effect_bundle.peri, ratings)
        labeled, _ = ev.derive_labels(bundle, ev.TaskSpec("q3"))
        sub = labeled[0]
        for row, label in zip(sub.indices, sub.y):
            dr = bundle.eeg.dynamic_ranges[row]
            assert label == (1 if dr == "LDR" else 0)  # 5 -> low = class B

    def test_single_class_subject_excluded_with_notice(self, effect_bundle):
        subjects = effect_bundle.subjects
        q3 = {s: {"LDR": 4, "TMHDR": 7} for s in subjects}
        q3[subjects[0]] = {"LDR": 8, "TMHDR": 9}  # all high -> excluded
        bundle = ev.FeatureBundle(effect_bundle.eeg, effect_bundle.peri,
                                  make_ratings(subjects, q3))
        labeled, notices = ev.derive_labels(bundle, ev.TaskSpec("q3"))
        assert subjects[0] not in [s.subject_id for s in labeled]
        assert any(subjects[0] in n for n in notices)

    def test_all_single_class_is_an_error(self, effect_bundle):
        subjects = effect_bundle.subjects
        ratings = make_ratings(subjects, {s: {"LDR": 8, "TMHDR": 9} for s in subjects})
        bundle = ev.FeatureBundle(effect_bundle.eeg, effect_bundle.peri, ratings)
        with pytest.raises(ev.EvaluationError, match="impossible"):
            ev.derive_labels(bundle, ev.TaskSpec("q3"))

    def test_missing_rating_is_a_precise_error(self, effect_bundle):
        subjects = effect_bundle.subjects
        ratings = make_ratings(subjects[1:], {s: {"LDR": 4, "TMHDR": 7} for s in subjects[1:]})
        bundle = ev.FeatureBundle(effect_bundle.eeg, effect_bundle.peri, ratings)
        with pytest.raises(ev.EvaluationError, match=subjects[0]):
            ev.derive_labels(bundle, ev.TaskSpec("q3"))

    def test_hdr_task_needs_no_ratings(self, effect_bundle):
        bundle = ev.FeatureBundle(effect_bundle.eeg, effect_bundle.peri, [])
        labeled, _ = ev.derive_labels(bundle, ev.TaskSpec("hdr"))
        assert labeled


class TestSubjectDependent:
    def test_effect_bundle_above_chance(self, effect_bundle):
        report = ev.run_subject_dependent(
            effect_bundle, ev.TaskSpec("hdr"), modality="eeg",
            reps=1, seed=3, harness=SMALL_HARNESS,
        )
        assert report.summary["accuracy"]["mean"] >= 0.75
        assert report.selection_eeg["band_frequencies"]["gamma"] >= 0.5
        assert not report.selection_peri

    def test_peri_modality_above_chance(self, effect_bundle):
        report = ev.run_subject_dependent(
            effect_bundle, ev.TaskSpec("hdr"), modality="peri",
            reps=1, seed=3, harness=SMALL_HARNESS,
        )
        assert report.summary["accuracy"]["mean"] >= 0.75
        assert report.selection_peri["sensor_counts"]["Plet"] > 0

    def test_determinism_identical_reports(self, effect_bundle):
        kwargs = dict(task=ev.TaskSpec("hdr"), modality="eeg", reps=1, seed=11,
                      harness=SMALL_HARNESS)
        r1 = ev.run_subject_dependent(effect_bundle, **kwargs)
        r2 = ev.run_subject_dependent(effect_bundle, **kwargs)
        assert r1.to_dict() == r2.to_dict()

    def test_parallel_equals_serial(self, effect_bundle):
        kwargs = dict(task=ev.TaskSpec("hdr"), modality="eeg", reps=2, seed=11,
                      harness=SMALL_HARNESS)
        r1 = ev.run_subject_dependent(effect_bundle, jobs=1, **kwargs)
        r2 = ev.run_subject_dependent(effect_bundle, jobs=2, **kwargs)
        assert r1.to_dict() == r2.to_dict()

    def test_fusion_records_carry_posteriors_and_weight(self, effect_bundle):
        report = ev.run_subject_dependent(
            effect_bundle, ev.TaskSpec("hdr"), modality="fusion",
            reps=1, seed=5, harness=SMALL_HARNESS,
        )
        ok = [t for t in report.trials if "error" not in t]
        assert ok
        for t in ok:
            assert 0.0 <= t["weight"] <= 1.0
            assert len(t["posteriors_eeg"][0]) == 2
            assert len(t["posteriors_peri"][0]) == 2
        assert report.selection_eeg and report.selection_peri

    def test_reps_reseed_initialization_only(self, effect_bundle):
        report = ev.run_subject_dependent(
            effect_bundle, ev.TaskSpec("hdr"), modality="eeg",
            reps=2, seed=5, harness=SMALL_HARNESS,
        )
        # Rankings depend only on the data, so the selected feature sets of
        # rep 0 and rep 1 may differ only through the chosen k.
        by_rep: dict = {}
        for t in report.trials:
            if "eeg" in t:
                by_rep.setdefault((t["subject"], t["trial"]), {})[t["rep"]] = t["eeg"]["selected"]
        for pair in by_rep.values():
            if len(pair) == 2:
                a, b = pair[0], pair[1]
                short = min(len(a), len(b))
                assert a[:short] == b[:short]

    def test_no_test_leakage_poison_check(self, effect_bundle):
        # Poison one subject's test rows with huge values AFTER the split:
        # all training-side artifacts (ranking, chosen cell, model digest)
        # must be identical, because nothing may read the held-out row.
        subject = effect_bundle.subjects[0]
        idx = effect_bundle.eeg.rows_of(subject)
        poisoned = ev.FeatureBundle(
            eeg=copy.deepcopy(effect_bundle.eeg),
            peri=copy.deepcopy(effect_bundle.peri),
            ratings=list(effect_bundle.ratings),
        )
        target_trial = 2
        row = idx[target_trial]
        poisoned.eeg.matrix[row] = 1e9
        poisoned.peri.matrix[row] = 1e9

        kwargs = dict(task=ev.TaskSpec("hdr"), modality="fusion", reps=1, seed=9,
                      harness=SMALL_HARNESS)
        clean_rep = ev.run_subject_dependent(effect_bundle, **kwargs)
        poison_rep = ev.run_subject_dependent(poisoned, **kwargs)

        def trial_of(report, t):
            return next(r for r in report.trials if r["subject"] == subject and r["trial"] == t)

        clean_t = trial_of(clean_rep, target_trial)
        poison_t = trial_of(poison_rep, target_trial)
        for modality_key in ("eeg", "peri"):
            assert clean_t[modality_key]["selected"] == poison_t[modality_key]["selected"]
            assert clean_t[modality_key]["hidden_n"] == poison_t[modality_key]["hidden_n"]
            assert clean_t[modality_key]["k"] == poison_t[modality_key]["k"]
            assert clean_t[modality_key]["digest"] == poison_t[modality_key]["digest"]
        assert clean_t["weight"] == poison_t["weight"]

    def test_too_few_segments_rejected(self, effect_bundle):
        table = effect_bundle.eeg
        crop = [int(table.rows_of(s)[0]) for s in effect_bundle.subjects]

        def slice_table(t):
            return ev.FeatureTable(
                names=t.names,
                matrix=t.matrix[crop],
                subject_ids=[t.subject_ids[i] for i in crop],
                stimulus_ids=[t.stimulus_ids[i] for i in crop],
                window_indices=[t.window_indices[i] for i in crop],
                dynamic_ranges=[t.dynamic_ranges[i] for i in crop],
                contents=[t.contents[i] for i in crop],
            )

        tiny = ev.FeatureBundle(slice_table(effect_bundle.eeg), slice_table(effect_bundle.peri), [])
        with pytest.raises(ev.EvaluationError):
            ev.run_subject_dependent(tiny, ev.TaskSpec("hdr"), harness=SMALL_HARNESS)


class TestQualityTasks:
    def test_q3_dep_run_with_exclusions_and_failed_trials(self):
        # Generator ratings make some subjects single-class under q3; they
        # must be excluded with a notice, and trials whose training split
        # degenerates must count as incorrect instead of aborting.
        bundle, _ = small_bundle(n_subjects=4, seed=71)
        rep = ev.run_subject_dependent(bundle, ev.TaskSpec("q3"), modality="eeg",
                                       reps=1, seed=4, harness=SMALL_HARNESS)
        assert rep.exclusions
        assert len(rep.subjects) < 4
        for m in ("accuracy", "balanced_accuracy", "f_measure"):
            assert 0.0 <= rep.summary[m]["mean"] <= 1.0

    def test_q1_indep_run(self):
        bundle, _ = small_bundle(n_subjects=4, seed=71)
        rep = ev.run_subject_independent(bundle, ev.TaskSpec("q1"), modality="peri",
                                         reps=1, seed=4, harness=SMALL_HARNESS)
        assert rep.scenario == "indep"
        assert 0.0 <= rep.summary["balanced_accuracy"]["mean"] <= 1.0


class TestSubjectIndependent:
    def test_shared_effect_above_chance(self):
        bundle, _ = small_bundle(n_subjects=4, gamma_db=6.0, seed=55)
        report = ev.run_subject_independent(
            bundle, ev.TaskSpec("hdr"), modality="eeg",
            reps=1, seed=2, harness=SMALL_HARNESS,
        )
        assert report.summary["accuracy"]["mean"] > 0.6

    def test_contradictory_effects_near_chance(self):
        flips = tuple(
            (i, synth.EffectSpec(power_ratio_db=db, electrodes=el))
            for i, (db, el) in enumerate([
                (6.0, ("O1", "O2", "Oz", "PO3")),
                (-6.0, ("O1", "O2", "Oz", "PO3")),
                (6.0, ("F3", "F4", "F7", "F8")),
                (-6.0, ("F3", "F4", "F7", "F8")),
            ])
        )
        bundle, _ = small_bundle(n_subjects=4, gamma_db=0.0, hr_offset=0.0,
                                 seed=56, subject_effects=flips)
        report = ev.run_subject_independent(
            bundle, ev.TaskSpec("hdr"), modality="eeg",
            reps=2, seed=2, harness=SMALL_HARNESS,
        )
        assert 0.25 <= report.summary["accuracy"]["mean"] <= 0.75

    def test_single_subject_rejected(self):
        bundle, _ = small_bundle(n_subjects=1, seed=57)
        with pytest.raises(ev.EvaluationError, match="2 subjects"):
            ev.run_subject_independent(bundle, ev.TaskSpec("hdr"), harness=SMALL_HARNESS)

    def test_determinism(self):
        bundle, _ = small_bundle(n_subjects=3, seed=58)
        kwargs = dict(task=ev.TaskSpec("hdr"), modality="eeg", reps=1, seed=4,
                      harness=SMALL_HARNESS)
        r1 = ev.run_subject_independent(bundle, **kwargs)
        r2 = ev.run_subject_independent(bundle, **kwargs)
        assert r1.to_dict() == r2.to_dict()


class TestAggregation:
    def test_report_structure(self, effect_bundle):
        report = ev.run_subject_dependent(
            effect_bundle, ev.TaskSpec("hdr"), modality="eeg",
            reps=2, seed=1, harness=SMALL_HARNESS,
        )
        assert len(report.per_rep) == 2
        n_sub = len(effect_bundle.subjects)
        assert len(report.per_subject_rep) == 2 * n_sub
        for m in ("accuracy", "balanced_accuracy", "f_measure"):
            assert 0.0 <= report.summary[m]["mean"] <= 1.0
        assert set(report.p_values) == {"accuracy", "balanced_accuracy", "f_measure"}

    def test_mean_over_reps_equals_pooled_when_sizes_equal(self, effect_bundle):
        report = ev.run_subject_dependent(
            effect_bundle, ev.TaskSpec("hdr"), modality="eeg",
            reps=2, seed=1, harness=SMALL_HARNESS,
        )
        total_correct = sum(
            int(p == t) for r in report.trials for p, t in zip(r["predicted"], r["true"])
        )
        total = sum(len(r["true"]) for r in report.trials)
        pooled = total_correct / total
        mean_of_reps = float(np.mean([r["accuracy"] for r in report.per_rep]))
        assert mean_of_reps == pytest.approx(pooled, abs=1e-12)
