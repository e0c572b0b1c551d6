import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airwaykit.cls_metrics import (
    PredictionSet,
    classification_report,
    concordance_auc,
    roc_auc,
    roc_curve,
    write_roc_csv,
)
from airwaykit.errors import EmptyInput, SingleClassInput


def pset(probs, labels, threshold=0.5):
    ids = tuple(f"c{i}" for i in range(len(probs)))
    return PredictionSet(ids, np.array(probs, float), np.array(labels, int), threshold)


def random_pset(rng, n=20, with_ties=False):
    probs = rng.integers(0, 10, size=n) / 10.0 if with_ties else rng.random(n)
    labels = rng.integers(0, 2, size=n)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    return pset(probs, labels)


class TestClassificationReport:
    def test_perfect_separation(self):
        preds = pset([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
        r = classification_report(preds)
        assert (r.acc, r.sensitivity, r.specificity, r.f1, r.auc) == (1, 1, 1, 1, 1)
        assert r.overall == 1.0

    def test_worked_auc_example(self):
        preds = pset([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
        r = classification_report(preds)
        assert r.auc == 0.75  # 3 concordant of the 4 (neg, pos) pairs

    def test_zero_false_positives_gives_perfect_specificity(self):
        # every predicted-alive case is truly alive
        preds = pset([0.1, 0.2, 0.3, 0.9, 0.2], [0, 0, 1, 1, 1])
        r = classification_report(preds)
        assert r.specificity == 1.0

    def test_weights_select_accuracy(self):
        preds = pset([0.3, 0.7, 0.6, 0.2], [0, 1, 0, 1])
        r = classification_report(preds, weights=(1, 0, 0, 0, 0))
        assert r.overall == r.acc

    def test_weight_validation(self):
        preds = pset([0.3, 0.7], [0, 1])
        with pytest.raises(ValueError):
            classification_report(preds, weights=(0.5, 0.5, 0.5, 0, 0))

    def test_single_class_raises(self):
        with pytest.raises(SingleClassInput):
            classification_report(pset([0.2, 0.4], [1, 1]))

    def test_empty_raises(self):
        with pytest.raises(EmptyInput):
            classification_report(pset([], []))

    def test_label_complement_symmetry(self):
        rng = np.random.default_rng(0)
        p = random_pset(rng)
        flipped = pset(1 - p.probs, 1 - p.labels)
        assert concordance_auc(flipped.probs, flipped.labels) == pytest.approx(
            concordance_auc(p.probs, p.labels), abs=1e-12)

    def test_monotone_transform_invariance_and_reversal(self):
        rng = np.random.default_rng(1)
        probs = rng.permutation(np.linspace(0.05, 0.95, 16))
        labels = rng.integers(0, 2, size=16)
        labels[:2] = [0, 1]
        auc = concordance_auc(probs, labels)
        assert concordance_auc(probs ** 2, labels) == pytest.approx(auc, abs=1e-12)
        assert concordance_auc(1 - probs, labels) == pytest.approx(1 - auc, abs=1e-12)

    def test_optimal_threshold_beats_prior(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            p = random_pset(rng, n=15, with_ties=True)
            prior = max(p.labels.mean(), 1 - p.labels.mean())
            best = max(
                classification_report(pset(p.probs, p.labels, threshold=t)).acc
                for t in np.unique(np.concatenate([[0.0, 1.01], p.probs, p.probs + 1e-9]))
            )
            assert best >= prior - 1e-12


class TestRocCurve:
    def test_perfect_curve_hits_corner(self):
        preds = pset([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
        points = roc_curve(preds)
        assert points[0] == (0.0, 0.0)
        assert points[-1] == (1.0, 1.0)
        assert (0.0, 1.0) in points

    def test_constant_scores_diagonal(self):
        preds = pset([0.5] * 6, [0, 1, 0, 1, 0, 1])
        points = roc_curve(preds)
        assert points == [(0.0, 0.0), (1.0, 1.0)]
        assert roc_auc(points) == 0.5

    @given(st.integers(0, 10_000), st.booleans())
    @settings(max_examples=60, deadline=None)
    def test_trapezoid_equals_concordance(self, seed, ties):
        rng = np.random.default_rng(seed)
        p = random_pset(rng, n=20, with_ties=ties)
        area = roc_auc(roc_curve(p))
        auc = concordance_auc(p.probs, p.labels)
        assert abs(area - auc) < 1e-12

    def test_csv_output(self, tmp_path):
        preds = pset([0.1, 0.9], [0, 1])
        path = tmp_path / "roc.csv"
        write_roc_csv(roc_curve(preds), path)
        assert path.read_text().splitlines()[0] == "fpr,tpr"


class TestPredictionSet:
    def test_validation(self):
        with pytest.raises(ValueError):
            pset([1.2], [1])
        with pytest.raises(ValueError):
            pset([0.5], [2])
        with pytest.raises(ValueError):
            PredictionSet(("a", "a"), np.array([0.1, 0.2]), np.array([0, 1]))

    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "preds.csv"
        path.write_text("case_id,prob,label\nA,0.25,0\nB,0.75,1\n")
        p = PredictionSet.from_csv(path)
        assert p.case_ids == ("A", "B")
        assert p.probs.tolist() == [0.25, 0.75]
        assert p.labels.tolist() == [0, 1]
