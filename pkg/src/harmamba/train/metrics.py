"""Classification metrics from a confusion matrix (rows = true class)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"{y_true.shape[0]} labels but {y_pred.shape[0]} predictions")
    for name, arr in (("label", y_true), ("prediction", y_pred)):
        bad = (arr < 0) | (arr >= n_classes)
        if bad.any():
            raise ValueError(f"{name} {int(arr[bad][0])} outside [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def precision_recall(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-class precision and recall; 0 where the denominator is 0."""
    tp = np.diag(cm).astype(np.float64)
    pred = cm.sum(axis=0)
    true = cm.sum(axis=1)
    prec = np.divide(tp, pred, out=np.zeros_like(tp), where=pred > 0)
    rec = np.divide(tp, true, out=np.zeros_like(tp), where=true > 0)
    return prec, rec


def per_class_f1(cm: np.ndarray) -> np.ndarray:
    prec, rec = precision_recall(cm)
    denom = prec + rec
    undefined = (denom == 0) & (cm.sum(axis=1) > 0)
    if undefined.any():
        warnings.warn(f"F1 undefined for classes {np.flatnonzero(undefined).tolist()}; counted as 0",
                      RuntimeWarning, stacklevel=3)
    return np.divide(2 * prec * rec, denom, out=np.zeros_like(prec), where=denom > 0)


def weighted_f1(cm: np.ndarray) -> float:
    """Sum over classes of (n_c / N) * F1_c."""
    n_c = cm.sum(axis=1)
    return float((n_c / n_c.sum()) @ per_class_f1(cm))


def accuracy_std(cm: np.ndarray) -> float:
    return float(np.trace(cm) / cm.sum())


def accuracy_ovr(cm: np.ndarray) -> float:
    """Mean over classes of the one-vs-rest accuracy (TP + TN) / N."""
    N = cm.sum()
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    tn = N - tp - fp - fn
    return float(((tp + tn) / N).mean())


@dataclass
class EvalReport:
    accuracy_std: float
    accuracy_ovr: float
    weighted_f1: float
    precision: list
    recall: list
    confusion: np.ndarray
    loss: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {"accuracy_std": self.accuracy_std, "accuracy_ovr": self.accuracy_ovr,
                "weighted_f1": self.weighted_f1, "loss": self.loss, "n": self.n,
                "precision": list(self.precision), "recall": list(self.recall),
                "confusion": self.confusion.tolist(), **self.extra}


def report(y_true, y_pred, n_classes: int, loss: float = float("nan")) -> EvalReport:
    cm = confusion_matrix(y_true, y_pred, n_classes)
    if cm.sum() == 0:
        raise ValueError("cannot evaluate an empty split")
    prec, rec = precision_recall(cm)
    return EvalReport(accuracy_std(cm), accuracy_ovr(cm), weighted_f1(cm),
                      prec.tolist(), rec.tolist(), cm, float(loss))


def write_confusion_csv(path, cm: np.ndarray) -> None:
    np.savetxt(path, cm, fmt="%d", delimiter=",")
