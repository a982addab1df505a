"""Detection metrics (ROC, AUC, EER, balanced accuracy), attribution and correlation analysis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REAL, DF = "REAL", "DF"


class MetricError(ValueError):
    pass


def _positive_mask(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.dtype.kind in "USO":
        bad = set(labels.tolist()) - {REAL, DF}
        if bad:
            raise MetricError(f"unknown labels {sorted(bad)}")
        return labels == DF
    return labels.astype(np.float64) > 0


@dataclass(frozen=True)
class RocCurve:
    """ROC points with DF as the positive class.

    ``thresholds[k]`` is the score cut (predict DF iff score >= cut) giving
    ``(fpr[k], tpr[k])``; the leading point uses ``+inf``.
    """

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    n_pos: int
    n_neg: int


def roc_curve(scores, labels) -> RocCurve:
    scores = np.asarray(scores, dtype=np.float64)
    pos = _positive_mask(labels)
    if scores.shape != pos.shape:
        raise MetricError("scores and labels differ in length")
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("ROC needs both REAL and DF samples")

    order = np.argsort(-scores, kind="mergesort")
    s, p = scores[order], pos[order]
    tp, fp = np.cumsum(p), np.cumsum(~p)
    # keep the last index of every run of tied scores
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    fpr = np.r_[0.0, fp[last] / n_neg]
    tpr = np.r_[0.0, tp[last] / n_pos]
    thr = np.r_[np.inf, s[last]]  # the lowest cut already yields (1, 1)
    return RocCurve(fpr, tpr, thr, n_pos, n_neg)


def auc(r: RocCurve) -> float:
    """Trapezoidal area under the ROC curve."""
    return float(np.sum(np.diff(r.fpr) * (r.tpr[1:] + r.tpr[:-1]) * 0.5))


def eer(r: RocCurve) -> float:
    """Equal error rate by linear interpolation across the FPR = FNR crossing."""
    fnr = 1.0 - r.tpr
    d = r.fpr - fnr  # -1 at the first point, +1 at the last
    k = int(np.argmax(d >= 0))
    if d[k] == 0:
        return float(r.fpr[k])
    d0, d1 = d[k - 1], d[k]
    t = d0 / (d0 - d1)
    return float(r.fpr[k - 1] + t * (r.fpr[k] - r.fpr[k - 1]))


def balanced_accuracy(pred, truth) -> float:
    """Mean of the DF recall (TPR) and REAL recall (TNR)."""
    p, t = _positive_mask(pred), _positive_mask(truth)
    if p.shape != t.shape:
        raise MetricError("predictions and ground truth differ in length")
    if t.all() or not t.any():
        raise MetricError("balanced accuracy needs both classes in the ground truth")
    tpr = (p & t).sum() / t.sum()
    tnr = (~p & ~t).sum() / (~t).sum()
    return float((tpr + tnr) / 2.0)


def attribution_rates(pred, truth, system_ids) -> dict:
    """Per system id: fraction of rows whose prediction equals their true class.

    Returns ``{id: {"rate", "n", "correct", "label"}}`` in first-seen order.
    """
    pred, truth = np.asarray(pred), np.asarray(truth)
    ids = np.asarray(system_ids)
    if not (pred.shape == truth.shape == ids.shape):
        raise MetricError("pred, truth and system ids differ in length")
    out = {}
    for sid in dict.fromkeys(ids.tolist()):
        m = ids == sid
        classes = set(truth[m].tolist())
        if len(classes) != 1:
            raise MetricError(f"system {sid!r} mixes ground-truth classes {sorted(classes)}")
        correct = int((pred[m] == truth[m]).sum())
        n = int(m.sum())
        out[sid] = {"rate": correct / n, "n": n, "correct": correct, "label": classes.pop()}
    if not out:
        raise MetricError("no rows to attribute")
    return out


@dataclass(frozen=True)
class CorrelationMatrix:
    R: np.ndarray
    split: int  # first prosody column; speaker block is [0, split)

    def display(self) -> np.ndarray:
        """Copy with the diagonal zeroed for plotting."""
        D = self.R.copy()
        np.fill_diagonal(D, 0.0)
        return D


def pearson_matrix(F, split: int = 192) -> CorrelationMatrix:
    """Sample Pearson coefficients between all column pairs of an (n, N) matrix.

    Zero-variance columns correlate 0 with every other column and 1 with themselves.
    """
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] < 2:
        raise MetricError("need at least 2 observations")
    Z = F - F.mean(axis=0)
    norms = np.sqrt((Z * Z).sum(axis=0))
    live = norms > 0
    Z[:, live] /= norms[live]
    Z[:, ~live] = 0.0
    R = Z.T @ Z
    R = np.clip(0.5 * (R + R.T), -1.0, 1.0)
    np.fill_diagonal(R, 1.0)
    return CorrelationMatrix(R, split)


def block_stats(cm: CorrelationMatrix) -> dict:
    """Mean/std of absolute off-diagonal coefficients within each block.

    Keys: ``fs_fs`` (speaker-speaker), ``fp_fp`` (prosody-prosody),
    ``fs_fp`` (speaker-prosody cross block).
    """
    A = np.abs(cm.R)
    s = cm.split

    def offdiag(block):
        k = block.shape[0]
        return block[~np.eye(k, dtype=bool)]

    blocks = {
        "fs_fs": offdiag(A[:s, :s]),
        "fp_fp": offdiag(A[s:, s:]),
        "fs_fp": A[:s, s:].ravel(),
    }
    out = {}
    for key, vals in blocks.items():
        if vals.size == 0:
            out[key] = {"mean": 0.0, "std": 0.0}
        else:
            out[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return out


def percent(x: float) -> float:
    """Internal [0, 1] value as a percentage with two decimals."""
    return round(100.0 * x, 2)
