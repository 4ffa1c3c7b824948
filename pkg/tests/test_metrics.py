import itertools

import numpy as np
import pytest

from ppn.metrics import MetricError, auprc, auroc


def auroc_brute(labels, scores):
    # definitional pair count, ties worth half
    pos = [s for y, s in zip(labels, scores) if y == 1]
    neg = [s for y, s in zip(labels, scores) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0
               for p, n in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


def auprc_brute(labels, scores):
    # average precision: walk descending unique thresholds, accumulate
    # precision at each recall step
    labels = np.asarray(labels)
    scores = np.asarray(scores)
    total = 0.0
    prev_recall = 0.0
    for t in sorted(set(scores), reverse=True):
        kept = scores >= t
        tp = int(labels[kept].sum())
        precision = tp / int(kept.sum())
        recall = tp / int(labels.sum())
        total += (recall - prev_recall) * precision
        prev_recall = recall
    return total


class TestAuroc:
    def test_interleaved_example(self):
        assert auroc([1, 0, 1, 0], [0.8, 0.7, 0.6, 0.5]) == pytest.approx(0.75, abs=1e-12)

    def test_perfect_and_inverted(self):
        assert auroc([1, 0], [0.9, 0.1]) == 1.0
        assert auroc([1, 0], [0.1, 0.9]) == 0.0

    def test_all_tied_is_half(self):
        assert auroc([1, 0, 1, 0], [0.5, 0.5, 0.5, 0.5]) == pytest.approx(0.5, abs=1e-12)

    def test_matches_brute_force_with_ties(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(4, 30))
            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                labels[0], labels[1] = 0, 1
            scores = rng.integers(0, 6, size=n) / 5.0   # coarse grid forces ties
            assert auroc(labels, scores) == pytest.approx(
                auroc_brute(labels, scores), abs=1e-9)


class TestAuprc:
    def test_inverted_pair_example(self):
        assert auprc([1, 0], [0.1, 0.9]) == pytest.approx(0.5, abs=1e-12)

    def test_perfect_ranking(self):
        assert auprc([1, 1, 0, 0], [0.9, 0.8, 0.2, 0.1]) == pytest.approx(1.0, abs=1e-12)

    def test_matches_brute_force_with_ties(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n = int(rng.integers(4, 30))
            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                labels[0], labels[1] = 0, 1
            scores = rng.integers(0, 6, size=n) / 5.0
            assert auprc(labels, scores) == pytest.approx(
                auprc_brute(labels, scores), abs=1e-9)

    def test_random_scores_approach_prevalence(self):
        rng = np.random.default_rng(2)
        labels = (rng.random(20000) < 0.15).astype(int)
        got = auprc(labels, rng.random(20000))
        assert got == pytest.approx(0.15, abs=0.02)


class TestValidation:
    @pytest.mark.parametrize("labels,scores", [
        ([1, 1, 1], [0.1, 0.2, 0.3]),        # one class only
        ([0, 0], [0.5, 0.6]),
        ([1, 0, 2], [0.1, 0.2, 0.3]),        # non-binary label
        ([1, 0], [0.1, np.nan]),
        ([1, 0, 1], [0.1, 0.2]),             # length mismatch
    ])
    def test_rejected(self, labels, scores):
        for metric in (auroc, auprc):
            with pytest.raises(MetricError):
                metric(labels, scores)
