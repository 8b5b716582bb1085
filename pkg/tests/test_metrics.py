import json

import numpy as np
import pytest

from dcan.metrics import EvalReport, auc_scores, binary_auc, evaluate, f1_scores, precision_at_k
from oracles import brute_auc, brute_f1


class TestF1:
    def test_worked_example(self):
        # label A: TP=1, FP=1, FN=0; label B: TP=1, FP=0, FN=1
        y_true = np.array([[1, 1], [0, 1]])
        y_pred = np.array([[1, 1], [1, 0]])
        micro, macro, _ = f1_scores(y_true, y_pred)
        assert micro == pytest.approx(2 / 3, abs=1e-15)
        assert macro == pytest.approx(2 / 3, abs=1e-15)

    def test_perfect_and_empty(self):
        y = np.array([[1, 0], [0, 1], [1, 1]])
        assert f1_scores(y, y)[:2] == (1.0, 1.0)
        assert f1_scores(y, np.zeros_like(y))[:2] == (0.0, 0.0)

    def test_zero_over_zero_is_zero(self):
        y = np.array([[1, 0], [1, 0]])
        _, macro, per = f1_scores(y, y)
        assert per[1, 2] == 0.0
        assert macro == 0.5

    def test_matches_flattened_problem(self, rng):
        y = rng.integers(0, 2, size=(9, 4))
        p = rng.integers(0, 2, size=(9, 4))
        micro, _, _ = f1_scores(y, p)
        flat, _, _ = f1_scores(y.reshape(-1, 1), p.reshape(-1, 1))
        assert micro == pytest.approx(flat, abs=1e-15)

    def test_errors(self):
        with pytest.raises(ValueError):
            f1_scores(np.zeros((0, 2)), np.zeros((0, 2)))
        with pytest.raises(ValueError):
            f1_scores(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_against_oracle(self, rng):
        for _ in range(100):
            n, m = rng.integers(1, 8, size=2)
            y = rng.integers(0, 2, size=(n, m))
            p = rng.integers(0, 2, size=(n, m))
            micro, macro, _ = f1_scores(y, p)
            ref = brute_f1(y, p)
            assert abs(micro - ref[0]) < 1e-12 and abs(macro - ref[1]) < 1e-12


class TestAUC:
    def test_perfect_ranking(self):
        assert binary_auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0

    def test_ties_give_half(self):
        assert binary_auc([0, 1, 0, 1], [0.3] * 4) == 0.5

    def test_negation(self, rng):
        y = rng.integers(0, 2, size=30)
        y[:2] = [0, 1]
        s = rng.normal(size=30)
        assert binary_auc(y, -s) == pytest.approx(1 - binary_auc(y, s), abs=1e-12)

    def test_single_class_undefined(self):
        assert binary_auc([1, 1], [0.2, 0.4]) is None
        micro, macro, per = auc_scores(np.ones((3, 2)), np.zeros((3, 2)))
        assert micro is None and macro is None and per == [None, None]

    def test_macro_skips_degenerate_labels(self):
        y = np.array([[1, 1], [0, 1]])
        s = np.array([[0.9, 0.1], [0.1, 0.2]])
        _, macro, per = auc_scores(y, s)
        assert per == [1.0, None]
        assert macro == 1.0

    def test_micro_pools_pairs(self):
        y = np.array([[1, 0], [0, 1]])
        s = np.array([[0.9, 0.8], [0.1, 0.2]])
        micro, _, _ = auc_scores(y, s)
        assert micro == pytest.approx(brute_auc(y.ravel(), s.ravel()))

    def test_against_oracle(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 50))
            y = rng.integers(0, 2, size=n)
            s = rng.integers(0, 5, size=n) / 4.0  # coarse grid so ties occur
            ref = brute_auc(y, s)
            got = binary_auc(y, s)
            assert (ref is None and got is None) or abs(ref - got) < 1e-12


class TestPrecisionAtK:
    def test_two_of_five(self):
        y = np.array([[1, 0, 1, 0, 0, 1]])
        s = np.array([[0.9, 0.8, 0.7, 0.6, 0.5, 0.1]])
        assert precision_at_k(y, s, 5) == 0.4

    def test_all_and_none(self):
        y = np.array([[1, 1, 0], [1, 1, 0]])
        assert precision_at_k(y, np.array([[2, 1, 0], [1, 2, 0]]), 2) == 1.0
        assert precision_at_k(y, np.array([[0, 1, 2], [0, 1, 2]]), 1) == 0.0

    def test_ties_broken_by_label_index(self):
        y = np.array([[0, 1, 0]])
        assert precision_at_k(y, np.array([[0.5, 0.5, 0.5]]), 1) == 0.0
        assert precision_at_k(y, np.array([[0.5, 0.5, 0.5]]), 2) == 0.5

    def test_k_larger_than_m(self):
        with pytest.raises(ValueError):
            precision_at_k(np.ones((1, 3)), np.ones((1, 3)), 4)


class TestInvariances:
    def test_monotone_transform_and_permutation(self, rng):
        y = rng.integers(0, 2, size=(20, 6))
        s = rng.uniform(size=(20, 6))
        base = evaluate(y, s).summary()
        warped = evaluate(y, np.exp(3 * s) / 30.0, threshold=np.exp(1.5) / 30.0).summary()
        for key in ("macro_auc", "micro_auc", "precision_at_k", "micro_f1", "macro_f1"):
            assert warped[key] == pytest.approx(base[key], abs=1e-12)
        perm = rng.permutation(20)
        shuffled = evaluate(y[perm], s[perm]).summary()
        for key, value in base.items():
            assert shuffled[key] == pytest.approx(value, abs=1e-12)


class TestReport:
    @pytest.fixture
    def report(self):
        y = np.array([[1, 0, 1], [0, 0, 1]])
        s = np.array([[0.9, 0.2, 0.6], [0.3, 0.1, 0.7]])
        return evaluate(y, s, labels=["A", "B", "C"], k=5)

    def test_k_clamped_and_bounds(self, report):
        assert report.k == 3
        for value in report.summary().values():
            assert value is None or 0 <= value <= 3
        assert len(report.per_label) == 3

    def test_text_marks_undefined(self, report):
        text = report.to_text()
        assert "label.B=" in text and "auc:undefined" in text
        assert text.splitlines()[0].startswith("macro_auc=")

    def test_json_round_trip(self, report):
        again = EvalReport.from_json(report.to_json())
        assert again == report
        assert json.loads(report.to_json())["k"] == 3

    def test_unknown_metric(self, report):
        with pytest.raises(KeyError):
            report.metric("accuracy")
