"""Classification metrics and repeat aggregation for experiment runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def confusion(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[int, int, int, int]:
    """(TP, TN, FP, FN) with +1 as the positive class."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError("label vectors must be congruent")
    tp = int(np.sum((y_true > 0) & (y_pred > 0)))
    tn = int(np.sum((y_true < 0) & (y_pred < 0)))
    fp = int(np.sum((y_true < 0) & (y_pred > 0)))
    fn = int(np.sum((y_true > 0) & (y_pred < 0)))
    return tp, tn, fp, fn


def accuracy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    tp, tn, fp, fn = confusion(y_true, y_pred)
    return (tp + tn) / max(tp + tn + fp + fn, 1)


def recall(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    tp, _, _, fn = confusion(y_true, y_pred)
    return tp / max(tp + fn, 1)


def precision(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    tp, _, fp, _ = confusion(y_true, y_pred)
    return tp / max(tp + fp, 1)


@dataclass
class RepeatResult:
    stop_epoch: int
    train_time: float
    accuracy: float
    recall: float
    precision: float


@dataclass
class MetricsRow:
    """Mean +- 2 std over repeats, matching the reported table format."""

    protocol: str
    n_repeats: int
    stop_epoch_mean: float
    stop_epoch_2std: float
    train_time_mean: float
    accuracy_mean: float
    accuracy_2std: float
    recall_mean: float
    recall_2std: float
    precision_mean: float
    precision_2std: float

    @classmethod
    def aggregate(cls, protocol: str, repeats: list[RepeatResult]) -> "MetricsRow":
        if not repeats:
            raise ValueError("need at least one repeat")

        def stats(values):
            arr = np.asarray(values, dtype=np.float64)
            return float(arr.mean()), float(2.0 * arr.std())

        se_m, se_s = stats([r.stop_epoch for r in repeats])
        ac_m, ac_s = stats([r.accuracy for r in repeats])
        re_m, re_s = stats([r.recall for r in repeats])
        pr_m, pr_s = stats([r.precision for r in repeats])
        tt_m, _ = stats([r.train_time for r in repeats])
        for v in (ac_m, re_m, pr_m):
            assert 0.0 <= v <= 1.0
        return cls(protocol, len(repeats), se_m, se_s, tt_m, ac_m, ac_s, re_m, re_s, pr_m, pr_s)
