"""Classification metrics and the corrected resampled paired t-test."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats


@dataclass
class MetricsReport:
    acc: float
    macro_f1: float
    pr_auc: float
    cohen_kappa: float

    def to_dict(self):
        return asdict(self)


def confusion_matrix(y_true, y_pred, n_classes):
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def macro_f1(cm: np.ndarray) -> float:
    """Unweighted mean of per-class F1; classes never seen nor predicted count as 0."""
    tp = np.diag(cm).astype(float)
    denom = cm.sum(0) + cm.sum(1)  # 2tp + fp + fn
    f1 = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(f1.mean())


def cohen_kappa(cm: np.ndarray) -> float:
    n = cm.sum()
    p_o = np.trace(cm) / n
    p_e = float((cm.sum(0) * cm.sum(1)).sum()) / n**2
    if math.isclose(p_e, 1.0):
        warnings.warn("degenerate chance agreement (single class); kappa set to 0")
        return 0.0
    return float((p_o - p_e) / (1 - p_e))


def average_precision(y_bin: np.ndarray, score: np.ndarray) -> float:
    """Step-wise AP: sum over distinct thresholds of (R_n - R_{n-1}) P_n."""
    order = np.argsort(-score, kind="mergesort")
    score, y_bin = score[order], y_bin[order]
    # one point per distinct score value
    last = np.r_[np.flatnonzero(np.diff(score)), len(score) - 1]
    tp = np.cumsum(y_bin)[last]
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / y_bin.sum()
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def pr_auc(y_true, probs) -> float:
    """Macro one-vs-rest average precision over classes present in ``y_true``."""
    y_true = np.asarray(y_true)
    present = np.unique(y_true)
    return float(np.mean([average_precision((y_true == c).astype(float), probs[:, c])
                          for c in present]))


def compute_metrics(y_true, probs, n_classes: int | None = None) -> MetricsReport:
    probs = np.asarray(probs, dtype=float)
    y_true = np.asarray(y_true, dtype=np.int64)
    n_classes = n_classes or probs.shape[1]
    y_pred = probs.argmax(1)
    cm = confusion_matrix(y_true, y_pred, n_classes)
    absent = np.flatnonzero(cm.sum(1) == 0)
    if len(absent):
        warnings.warn(f"{len(absent)} classes absent from y_true contribute F1 = 0")
    return MetricsReport(
        acc=float((y_pred == y_true).mean()),
        macro_f1=macro_f1(cm),
        pr_auc=pr_auc(y_true, probs),
        cohen_kappa=cohen_kappa(cm),
    )


def aggregate(reports: list[MetricsReport]) -> dict:
    """Mean and (sample) std of each metric across folds."""
    out = {}
    for key in ("acc", "macro_f1", "pr_auc", "cohen_kappa"):
        vals = np.array([getattr(r, key) for r in reports])
        out[key] = {"mean": float(vals.mean()),
                    "std": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0}
    return out


def corrected_paired_ttest(scores_a, scores_b, n_train: int, n_test: int):
    """Paired t-test with the resampling-corrected variance of Nadeau and Bengio.

    Returns ``(t, p)``; ``p`` is two-sided with ``k - 1`` degrees of freedom.
    """
    a, b = np.asarray(scores_a, float), np.asarray(scores_b, float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValueError("need two equal-length score lists with at least 2 entries")
    d = a - b
    k = len(d)
    mean = d.mean()
    var = d.var(ddof=1)
    if var == 0:
        if mean == 0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / math.sqrt((1.0 / k + n_test / n_train) * var)
    p = 2 * stats.t.sf(abs(t), df=k - 1)
    return float(t), float(p)
