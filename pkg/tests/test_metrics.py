"""Metric and statistics oracles: macro F1 against brute-force confusion
counting, Student-t intervals and paired tests against frozen reference
computations."""

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import modn
from modn.metrics import PredictionSet, cv_5x2_predictions, macro_f1_arrays


def brute_force_macro_f1(decisions, labels):
    """Independent oracle: raw confusion counting, no shared code."""
    def f1(positive):
        tp = sum(1 for d, y in zip(decisions, labels) if d == positive and y == positive)
        fp = sum(1 for d, y in zip(decisions, labels) if d == positive and y != positive)
        fn = sum(1 for d, y in zip(decisions, labels) if d != positive and y == positive)
        if 2 * tp + fp + fn == 0:
            return 1.0
        return 2 * tp / (2 * tp + fp + fn)

    return (f1(1) + f1(0)) / 2


class TestMacroF1:
    def test_perfect_predictions(self):
        assert macro_f1_arrays([1, 0, 1, 0], [1, 0, 1, 0]) == 1.0

    def test_hand_confusion_matrix_example(self):
        assert macro_f1_arrays([1, 0, 1, 0], [1, 1, 0, 0]) == 0.5

    def test_all_wrong_side(self):
        assert macro_f1_arrays([0, 0], [1, 1]) == 0.0

    def test_brute_force_enumeration_all_256_length_4_pairs(self):
        for decisions in itertools.product([0, 1], repeat=4):
            for labels in itertools.product([0, 1], repeat=4):
                ours = macro_f1_arrays(list(decisions), list(labels))
                oracle = brute_force_macro_f1(decisions, labels)
                assert ours == pytest.approx(oracle, abs=0), (decisions, labels)

    def test_prediction_set_contract(self):
        ps = PredictionSet(np.array([[0.7, 0.2], [0.5, 0.9]]),
                           np.array([[1, 0], [0, 1]]), ["a", "b"], threshold=0.5)
        np.testing.assert_array_equal(ps.decisions, [[1, 0], [1, 1]])
        assert modn.macro_f1(ps, "b") == 1.0

    @given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=30))
    def test_score_always_in_unit_interval(self, pairs):
        decisions = [p[0] for p in pairs]
        labels = [p[1] for p in pairs]
        assert 0.0 <= macro_f1_arrays(decisions, labels) <= 1.0


class TestOverallF1:
    def test_examples(self):
        assert modn.overall_f1([1.0, 1.0]) == 1.0
        assert modn.overall_f1([0.4, 0.6]) == pytest.approx(0.5)

    def test_eight_fixture_scores_match_hand_sum(self):
        scores = [0.91, 0.74, 0.88, 0.65, 0.93, 0.81, 0.77, 0.85]
        assert modn.overall_f1(scores) == pytest.approx(sum(scores) / 8, rel=1e-15)


class TestMeanCi:
    def test_constant_scores_zero_width(self):
        mean, lo, hi = modn.mean_ci([0.8, 0.8, 0.8])
        assert mean == lo == hi == pytest.approx(0.8)

    def test_two_scores_match_t_table_reference(self):
        # frozen reference: t(1 df, 97.5%) = 12.706204736..., half-width = t * 0.05
        mean, lo, hi = modn.mean_ci([0.8, 0.9])
        assert mean == pytest.approx(0.85, abs=1e-12)
        assert lo == pytest.approx(0.2146897631783955, abs=1e-9)
        assert hi == pytest.approx(1.4853102368216047, abs=1e-9)

    def test_wider_interval_for_higher_variance(self):
        _, lo1, hi1 = modn.mean_ci([0.5, 0.6, 0.5, 0.6])
        _, lo2, hi2 = modn.mean_ci([0.3, 0.8, 0.2, 0.9])
        assert (hi2 - lo2) > (hi1 - lo1)

    def test_interval_contains_mean(self):
        mean, lo, hi = modn.mean_ci([0.1, 0.4, 0.35, 0.2])
        assert lo <= mean <= hi

    def test_needs_two_scores(self):
        with pytest.raises(ValueError):
            modn.mean_ci([0.5])


class TestPairedT:
    def test_identical_lists_degenerate(self):
        res = modn.paired_t_test([0.5, 0.6, 0.7], [0.5, 0.6, 0.7])
        assert res.p == 1.0 and res.degenerate

    def test_constant_nonzero_difference_flagged(self):
        res = modn.paired_t_test([0.6, 0.7, 0.8], [0.5, 0.6, 0.7])
        assert res.p == 1.0 and res.degenerate

    def test_fixture_matches_reference_stats(self):
        # frozen reference computed with an independent statistics package
        res = modn.paired_t_test([0.80, 0.82, 0.79, 0.85, 0.90],
                                 [0.75, 0.80, 0.80, 0.80, 0.85])
        assert res.t == pytest.approx(2.6666666666666634, abs=1e-9)
        assert res.p == pytest.approx(0.056000000000000175, abs=1e-9)
        assert not res.degenerate

    def test_antisymmetry(self):
        a = [0.8, 0.85, 0.9, 0.7]
        b = [0.65, 0.8, 0.85, 0.75]
        ab = modn.paired_t_test(a, b)
        ba = modn.paired_t_test(b, a)
        assert ab.t == pytest.approx(-ba.t, rel=1e-12)
        assert ab.p == pytest.approx(ba.p, rel=1e-12)

    def test_length_contract(self):
        with pytest.raises(ValueError):
            modn.paired_t_test([0.5], [0.6])
        with pytest.raises(ValueError):
            modn.paired_t_test([0.5, 0.6], [0.6])

    def test_5x2cv_variant(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(0.7, 0.9, 10)
        b = a - rng.uniform(0.01, 0.1, 10)  # differences vary within repetitions
        res = modn.paired_t_5x2cv(a, b)
        assert not res.degenerate and res.p < 1.0
        assert modn.paired_t_5x2cv(a, a).degenerate


class TestCv5x2:
    @staticmethod
    def majority_fitter(train_table, test_table, seed):
        rates = {
            t: np.mean([r.labels[t] for r in train_table.records])
            for t in train_table.targets
        }
        probs = np.array([[min(max(rates[t], 0.01), 0.99) for t in test_table.targets]
                          for _ in test_table.records])
        labels = np.array([[r.labels[t] for t in test_table.targets] for r in test_table.records])
        return PredictionSet(probs, labels, list(test_table.targets))

    def test_returns_10_scores_reproducibly(self, small_table):
        a = modn.cv_5x2(small_table, self.majority_fitter)
        b = modn.cv_5x2(small_table, self.majority_fitter)
        assert len(a) == 10 and a == b
        assert all(0.0 <= s <= 1.0 for s in a)

    def test_each_record_tested_exactly_five_times(self, small_table):
        seen: dict[str, int] = {}

        def counting_fitter(train_table, test_table, seed):
            for r in test_table.records:
                seen[r.record_id] = seen.get(r.record_id, 0) + 1
            return self.majority_fitter(train_table, test_table, seed)

        modn.cv_5x2(small_table, counting_fitter)
        assert set(seen.values()) == {5}
        assert len(seen) == len(small_table.records)

    def test_folds_are_disjoint_halves(self, small_table):
        folds = cv_5x2_predictions(small_table, self.majority_fitter)
        assert len(folds) == 10
        n = len(small_table.records)
        assert all(len(ps.labels) in (n // 2, n - n // 2) for ps in folds)

    def test_too_small_dataset_rejected(self, small_table):
        with pytest.raises(ValueError):
            modn.cv_5x2(small_table.subset(small_table.records[:1]), self.majority_fitter)
