"""Multi-view labelled sequences and their line-delimited JSON format.

One sequence per line::

    {"id": "seq0003", "labels": [0, 0, 2, ...],
     "views": [{"rows": T, "cols": D, "data": [row-major floats]}, ...]}

Floats go through ``repr`` (shortest round-trip decimal) so a save/load
cycle is exact.
"""
import json
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, EmptyDataset, InconsistentViews, ParseError


@dataclass
class MultiViewSequence:
    views: list
    labels: np.ndarray
    id: str = ""

    def __post_init__(self):
        self.views = [np.asarray(v, dtype=np.float64) for v in self.views]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not self.views:
            raise DimMismatch("a sequence needs at least one view")
        T = self.labels.shape[0]
        for v, x in enumerate(self.views):
            if x.ndim != 2 or x.shape[0] != T:
                raise DimMismatch(f"view {v} has shape {x.shape}, expected ({T}, D)")
        if T and self.labels.min() < 0:
            raise DimMismatch("labels must be non-negative")

    @property
    def length(self):
        return int(self.labels.shape[0])

    @property
    def n_views(self):
        return len(self.views)

    @property
    def feature_dims(self):
        return tuple(int(x.shape[1]) for x in self.views)

    def __eq__(self, other):
        if not isinstance(other, MultiViewSequence):
            return NotImplemented
        return (self.id == other.id and np.array_equal(self.labels, other.labels)
                and len(self.views) == len(other.views)
                and all(a.shape == b.shape and np.array_equal(a, b)
                        for a, b in zip(self.views, other.views)))


def check_consistent(seqs):
    """Raise unless every sequence has the same view count and feature dims."""
    if not seqs:
        raise EmptyDataset("dataset is empty")
    dims = seqs[0].feature_dims
    for s in seqs[1:]:
        if s.feature_dims != dims:
            raise InconsistentViews(f"sequence {s.id!r} has view dims {s.feature_dims}, expected {dims}")
    return dims


def _encode(seq):
    rec = {
        "id": seq.id,
        "labels": [int(y) for y in seq.labels],
        "views": [{"rows": int(x.shape[0]), "cols": int(x.shape[1]),
                   "data": [float(v) for v in x.ravel()]} for x in seq.views],
    }
    return json.dumps(rec, separators=(",", ":"))


def save_dataset(seqs, path):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for s in seqs:
            fh.write(_encode(s))
            fh.write("\n")


def _decode(line, lineno):
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
    try:
        labels = rec["labels"]
        views = []
        for v in rec["views"]:
            rows, cols, data = int(v["rows"]), int(v["cols"]), v["data"]
            if len(data) != rows * cols:
                raise DimMismatch(f"line {lineno}: view holds {len(data)} values, header says {rows}x{cols}")
            views.append(np.array(data, dtype=np.float64).reshape(rows, cols))
        return MultiViewSequence(views=views, labels=labels, id=str(rec.get("id", "")))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DimMismatch):
            raise
        raise ParseError(f"malformed record ({exc})", lineno) from None


def load_dataset(path):
    out = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            out.append(_decode(line, lineno))
    return out


def class_frequencies(seqs, n_classes=None):
    """Frame-level empirical label distribution."""
    if not seqs:
        raise EmptyDataset("dataset is empty")
    labels = np.concatenate([s.labels for s in seqs])
    if labels.size == 0:
        raise EmptyDataset("dataset has no frames")
    n = int(labels.max()) + 1 if n_classes is None else n_classes
    counts = np.bincount(labels, minlength=n).astype(np.float64)
    return counts / counts.sum()
