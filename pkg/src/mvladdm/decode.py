"""Max-sum decoding, evaluation metrics and ethogram export."""
import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateLabels, IoFailure, LengthMismatch

SVG_MAX_WIDTH = 4096
BAND_HEIGHT = 10
PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939", "#8c6d31"]


def run_segments(labels):
    """Run-length ``(label, start, end)`` triples with ``end`` exclusive."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate([[0], cuts])
    ends = np.concatenate([cuts, [labels.size]])
    return [(int(labels[s]), int(s), int(e)) for s, e in zip(starts, ends)]


@dataclass
class Ethogram:
    labels: np.ndarray
    scores: np.ndarray = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def segments(self):
        return run_segments(self.labels)


def path_score(unaries, trans, path):
    U = np.asarray(unaries, dtype=np.float64)
    path = np.asarray(path, dtype=np.int64)
    s = U[np.arange(len(path)), path].sum()
    if len(path) > 1:
        s += np.asarray(trans)[path[:-1], path[1:]].sum()
    return float(s)


def viterbi_decode(unaries, trans):
    """Highest-scoring label path; among equal scores the lexicographically
    smallest path (lowest label at the earliest differing frame)."""
    U = np.asarray(unaries, dtype=np.float64)
    if U.ndim != 2 or U.shape[0] < 1:
        raise ValueError("unaries must be a non-empty (T, N) matrix")
    path, _ = kernels.viterbi(U, np.asarray(trans, dtype=np.float64))
    return Ethogram(labels=path, scores=U.copy())


def confusion_matrix(truth, pred, n_classes):
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.shape != pred.shape:
        raise LengthMismatch(f"truth has {truth.size} frames, prediction {pred.size}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (truth, pred), 1)
    return cm


def per_class_accuracy(truth, pred, n_classes=None):
    """Recall per class and its mean over classes present in ``truth``.

    Classes without support get NaN and are left out of the average.
    """
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.shape != pred.shape:
        raise LengthMismatch(f"truth has {truth.size} frames, prediction {pred.size}")
    if n_classes is None:
        n_classes = int(max(truth.max(initial=-1), pred.max(initial=-1))) + 1
    cm = confusion_matrix(truth, pred, n_classes)
    support = cm.sum(axis=1)
    acc = np.full(n_classes, np.nan)
    has = support > 0
    acc[has] = np.diag(cm)[has] / support[has]
    avg = float(np.mean(acc[has])) if has.any() else float("nan")
    return acc, avg


def roc_auc(scores, truth):
    """ROC curve over every score breakpoint and its trapezoidal area.

    Returns ``(fpr, tpr, auc)``.  Tied scores move both rates at once, which
    gives the same area as the rank statistic with half credit for ties.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(truth).astype(bool)
    if s.shape != y.shape:
        raise LengthMismatch("scores and truth differ in length")
    P, Nn = int(y.sum()), int((~y).sum())
    if P == 0 or Nn == 0:
        raise DegenerateLabels("ROC needs both positive and negative examples")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = np.cumsum(~y)[last]
    tpr = np.r_[0.0, tp / P]
    fpr = np.r_[0.0, fp / Nn]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return fpr, tpr, auc


def log_softmax(unaries):
    U = np.asarray(unaries, dtype=np.float64)
    m = U.max(axis=1, keepdims=True)
    return U - m - np.log(np.exp(U - m).sum(axis=1, keepdims=True))


def metrics_report(truth, pred, scores, class_names):
    """Dictionary in the metrics JSON layout.

    AUC is one-vs-rest on per-frame log-softmax scores; classes with only
    positives or only negatives report ``null``.
    """
    N = len(class_names)
    acc, avg = per_class_accuracy(truth, pred, N)
    cm = confusion_matrix(truth, pred, N)
    ls = log_softmax(scores)
    truth = np.asarray(truth)
    auc = {}
    for n, name in enumerate(class_names):
        try:
            auc[name] = roc_auc(ls[:, n], truth == n)[2]
        except DegenerateLabels:
            auc[name] = None
    return {
        "per_class": {name: (None if np.isnan(a) else float(a)) for name, a in zip(class_names, acc)},
        "average": avg,
        "confusion": cm.tolist(),
        "auc": auc,
    }


def write_metrics(report, path):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _svg_columns(labels, width):
    """Label per pixel column: the most frequent label in each bin of frames."""
    T = labels.size
    if T <= width:
        return labels
    edges = np.linspace(0, T, width + 1).astype(np.int64)
    n = int(labels.max()) + 1
    cols = np.empty(width, dtype=np.int64)
    for k in range(width):
        cols[k] = int(np.argmax(np.bincount(labels[edges[k]:edges[k + 1]], minlength=n)))
    return cols


def ethogram_svg(labels, n_labels=None):
    labels = np.asarray(labels, dtype=np.int64)
    n_labels = int(labels.max()) + 1 if n_labels is None else n_labels
    width = min(labels.size, SVG_MAX_WIDTH)
    cols = _svg_columns(labels, width)
    height = BAND_HEIGHT * n_labels
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>']
    for lab, start, end in run_segments(cols):
        color = PALETTE[lab % len(PALETTE)]
        parts.append(f'<rect x="{start}" y="{lab * BAND_HEIGHT}" width="{end - start}" '
                     f'height="{BAND_HEIGHT}" fill="{color}"><title>{lab}</title></rect>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_ethogram(e, path, n_labels=None):
    """Write ``<path>.csv`` (segments) and ``<path>.svg`` (strip chart)."""
    base = os.fspath(path)
    if base.endswith(".csv"):
        base = base[:-4]
    try:
        with open(base + ".csv", "w", encoding="ascii", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "start_frame", "end_frame"])
            for seg in e.segments:
                w.writerow(seg)
        with open(base + ".svg", "w", encoding="ascii", newline="\n") as fh:
            fh.write(ethogram_svg(e.labels, n_labels))
    except OSError as exc:
        raise IoFailure(f"cannot write ethogram {base}: {exc}") from exc
    return base + ".csv", base + ".svg"


def read_ethogram_csv(path):
    """Frame labels reconstructed from a segment CSV."""
    labels = []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows)
        if header != ["label", "start_frame", "end_frame"]:
            raise ValueError(f"unexpected ethogram header {header}")
        for lab, start, end in rows:
            labels.extend([int(lab)] * (int(end) - int(start)))
    return np.array(labels, dtype=np.int64)
