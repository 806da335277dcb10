import os

import numpy as np
import pytest
from sklearn.metrics import f1_score, precision_score, recall_score

from corpus import LABELS
from metrics import MetricReport, confusion, mean_report, metric_report, per_class, reports_frame, save_confusion


class TestConfusion:
    def test_identical_lists_diagonal(self):
        labels = ["support", "oppose", "none", "none"]
        np.testing.assert_array_equal(confusion(labels, labels), np.diag([1, 1, 2]))

    def test_empty(self):
        np.testing.assert_array_equal(confusion([], []), np.zeros((3, 3)))

    def test_single_off_diagonal(self):
        cm = confusion(["support"], ["oppose"])
        assert cm[0, 1] == 1 and cm.sum() == 1

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            confusion(["support"], [])

    def test_unknown_label(self):
        with pytest.raises(ValueError):
            confusion(["support"], ["maybe"])


class TestMetricReport:
    def test_perfect(self):
        report = metric_report(np.diag([3, 2, 5]))
        assert report == MetricReport(1.0, 1.0, 1.0, 1.0, 1.0)

    def test_hand_computed_case(self):
        cm = confusion(["support", "support", "oppose", "none"], ["support", "oppose", "oppose", "none"])
        report = metric_report(cm)
        assert report.precision_support == 1.0
        assert report.recall_support == 0.5
        assert report.precision_oppose == 0.5
        assert report.recall_oppose == 1.0
        assert report.macro_f1 == pytest.approx(7 / 9, abs=1e-12)

    def test_absent_class_contributes_zero(self):
        cm = confusion(["support", "oppose"], ["support", "oppose"])
        assert metric_report(cm).macro_f1 == pytest.approx(2 / 3)
        assert per_class(cm)[2] == (0.0, 0.0, 0.0)

    def test_matches_sklearn_on_random_cases(self, np_rng):
        for _ in range(1000):
            n = int(np_rng.integers(1, 30))
            golds = list(np_rng.choice(LABELS, size=n))
            preds = list(np_rng.choice(LABELS, size=n))
            report = metric_report(confusion(golds, preds))
            kwargs = dict(labels=list(LABELS), zero_division=0)
            per_p = precision_score(golds, preds, average=None, **kwargs)
            per_r = recall_score(golds, preds, average=None, **kwargs)
            assert report.macro_f1 == pytest.approx(f1_score(golds, preds, average="macro", **kwargs))
            assert (report.precision_support, report.precision_oppose) == pytest.approx(tuple(per_p[:2]))
            assert (report.recall_support, report.recall_oppose) == pytest.approx(tuple(per_r[:2]))

    def test_order_invariance(self, np_rng):
        golds = list(np_rng.choice(LABELS, size=40))
        preds = list(np_rng.choice(LABELS, size=40))
        perm = np_rng.permutation(40)
        shuffled = metric_report(confusion([golds[i] for i in perm], [preds[i] for i in perm]))
        assert shuffled == metric_report(confusion(golds, preds))


class TestAggregation:
    def test_mean_report(self):
        a = MetricReport(1.0, 1.0, 0.0, 0.5, 0.5)
        b = MetricReport(0.0, 0.0, 1.0, 0.5, 0.0)
        assert mean_report([a, b]) == MetricReport(0.5, 0.5, 0.5, 0.5, 0.25)

    def test_mean_of_nothing(self):
        with pytest.raises(ValueError):
            mean_report([])

    def test_frame_has_mean_row(self):
        reports = [MetricReport(1.0, 1.0, 1.0, 1.0, 1.0), MetricReport(0.5, 0.5, 0.5, 0.5, 0.5)]
        frame = reports_frame(reports, ["a", "b"], "target")
        assert frame["target"].tolist() == ["a", "b", "mean"]
        assert frame.loc[2, "macro_f1"] == pytest.approx(0.75)

    def test_save_confusion(self, tmp_path):
        csv_path, png_path = save_confusion(np.eye(3, dtype=int), str(tmp_path))
        assert os.path.exists(csv_path) and os.path.exists(png_path)
