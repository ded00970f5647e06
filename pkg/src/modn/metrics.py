"""Evaluation metrics and the statistics used to compare models: macro F1
over the presence/absence classes, unweighted target averages, Student-t
confidence intervals over seeds, paired t-tests, and 5x2 cross-validation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as spstats

from .data import DatasetTable


@dataclass
class PredictionSet:
    """Per-record per-target probabilities with labels and a decision threshold."""

    probabilities: np.ndarray  # [n_records, n_targets]
    labels: np.ndarray  # [n_records, n_targets] in {0, 1}
    targets: list[str]
    threshold: float = 0.5

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.probabilities.shape != self.labels.shape:
            raise ValueError("probabilities and labels must have equal shapes")
        if self.probabilities.shape[1] != len(self.targets):
            raise ValueError("column count must equal the number of targets")

    @property
    def decisions(self) -> np.ndarray:
        return (self.probabilities >= self.threshold).astype(np.int64)

    def column(self, target_id: str) -> int:
        return self.targets.index(target_id)


def _f1_one_class(decisions: np.ndarray, labels: np.ndarray, positive: int) -> float:
    tp = int(np.sum((decisions == positive) & (labels == positive)))
    fp = int(np.sum((decisions == positive) & (labels != positive)))
    fn = int(np.sum((decisions != positive) & (labels == positive)))
    denom = 2 * tp + fp + fn
    if denom == 0:
        # no true and no predicted instances of this class
        return 1.0
    return 2.0 * tp / denom


def macro_f1_arrays(decisions: np.ndarray, labels: np.ndarray) -> float:
    """Unweighted mean of the F1 for the positive and the negative class."""
    decisions = np.asarray(decisions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if decisions.size == 0:
        raise ValueError("macro F1 needs at least one record")
    return 0.5 * (_f1_one_class(decisions, labels, 1) + _f1_one_class(decisions, labels, 0))


def macro_f1(predictions: PredictionSet, target_id: str) -> float:
    col = predictions.column(target_id)
    return macro_f1_arrays(predictions.decisions[:, col], predictions.labels[:, col])


def overall_f1(per_target_scores) -> float:
    scores = list(per_target_scores)
    if not scores:
        raise ValueError("overall F1 needs at least one target score")
    return float(np.mean(scores))


def mean_ci(scores, level: float = 0.95) -> tuple[float, float, float]:
    """Student-t interval over per-seed scores: (mean, lo, hi)."""
    arr = np.asarray(list(scores), dtype=np.float64)
    if arr.size < 2:
        raise ValueError("confidence interval needs at least 2 scores")
    if np.all(arr == arr[0]):
        v = float(arr[0])
        return v, v, v
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1))
    half = float(spstats.t.ppf(0.5 + level / 2.0, arr.size - 1)) * sd / np.sqrt(arr.size)
    return mean, mean - half, mean + half


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    degenerate: bool = False  # zero variance of the paired differences

    def __iter__(self):
        return iter((self.t, self.p))


def paired_t_test(scores_a, scores_b) -> TTestResult:
    """Two-sided paired t-test on per-split score differences."""
    a = np.asarray(list(scores_a), dtype=np.float64)
    b = np.asarray(list(scores_b), dtype=np.float64)
    if a.shape != b.shape or a.size < 2:
        raise ValueError("paired t-test needs two equal-length lists with >= 2 entries")
    d = a - b
    sd = float(d.std(ddof=1))
    # zero variance of the differences, allowing for float rounding of constant diffs
    if sd <= 1e-12 * max(float(np.abs(d).max()), 1.0):
        return TTestResult(0.0, 1.0, degenerate=True)
    t = float(d.mean() / (sd / np.sqrt(d.size)))
    p = float(2.0 * spstats.t.sf(abs(t), d.size - 1))
    return TTestResult(t, p)


def paired_t_5x2cv(scores_a, scores_b) -> TTestResult:
    """Variance-corrected paired test for 5x2 CV scores (order: rep-major,
    fold-minor).  Uses the first-fold difference over the mean per-repetition
    variance with 5 degrees of freedom."""
    a = np.asarray(list(scores_a), dtype=np.float64)
    b = np.asarray(list(scores_b), dtype=np.float64)
    if a.shape != (10,) or b.shape != (10,):
        raise ValueError("5x2 CV test expects exactly 10 paired scores")
    d = (a - b).reshape(5, 2)
    means = d.mean(axis=1, keepdims=True)
    variances = ((d - means) ** 2).sum(axis=1)
    denom = float(np.sqrt(variances.mean()))
    if denom == 0.0:
        return TTestResult(0.0, 1.0, degenerate=True)
    t = float(d[0, 0] / denom)
    p = float(2.0 * spstats.t.sf(abs(t), 5))
    return TTestResult(t, p)


def cv_5x2_predictions(dataset: DatasetTable, fit_predict, n_repeats: int = 5,
                       seed0: int = 0) -> list[PredictionSet]:
    """Seeded repetitions of 2-fold CV; returns the 10 fold PredictionSets in
    fixed order (repetition-major, fold-minor)."""
    n = len(dataset.records)
    if n < 2:
        raise ValueError("dataset too small for 2-fold cross-validation")
    folds = []
    for rep in range(n_repeats):
        rng = np.random.default_rng(seed0 + rep)
        order = rng.permutation(n)
        half = n // 2
        first = [dataset.records[i] for i in order[:half]]
        second = [dataset.records[i] for i in order[half:]]
        for fold, (train_recs, test_recs) in enumerate([(first, second), (second, first)]):
            preds = fit_predict(dataset.subset(train_recs), dataset.subset(test_recs),
                                seed0 + 1000 * rep + fold)
            folds.append(preds)
    return folds


def cv_5x2(dataset: DatasetTable, fit_predict, n_repeats: int = 5, seed0: int = 0) -> list[float]:
    """10 overall macro-F1 scores from 5 seeded repetitions of 2-fold CV."""
    folds = cv_5x2_predictions(dataset, fit_predict, n_repeats, seed0)
    return [
        overall_f1([macro_f1(ps, t) for t in dataset.targets])
        for ps in folds
    ]
