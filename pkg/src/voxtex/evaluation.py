"""Slice splits, confusion matrices, per-label IoU and voxel accuracy."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Position within each run of five consecutive slices.
_PATTERN = ("train", "val", "train", "test", "train")


@dataclass(frozen=True)
class SliceSplit:
    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"train": list(self.train), "val": list(self.val), "test": list(self.test)}


def split_slices(indices: Sequence[int]) -> SliceSplit:
    """Interleaved 60/20/20 split; a trailing partial run goes to training."""
    ordered = sorted(int(i) for i in indices)
    if len(set(ordered)) != len(ordered):
        raise ValueError("slice indices must be distinct")
    if len(ordered) < 5:
        raise ValueError(f"need at least 5 slices to split, got {len(ordered)}")
    groups = {"train": [], "val": [], "test": []}
    full = len(ordered) - len(ordered) % 5
    for pos, z in enumerate(ordered):
        groups[_PATTERN[pos % 5] if pos < full else "train"].append(z)
    return SliceSplit(tuple(groups["train"]), tuple(groups["val"]), tuple(groups["test"]))


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are true labels, columns predicted labels."""

    counts: np.ndarray
    label_names: tuple[str, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def transpose(self) -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts.T.copy(), self.label_names)


def confusion(pred, truth, mask=None, n_labels: int | None = None,
              label_names: Sequence[str] | None = None) -> ConfusionMatrix:
    pred = np.asarray(getattr(pred, "data", pred))
    truth = np.asarray(getattr(truth, "data", truth))
    if pred.shape != truth.shape:
        raise ValueError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != truth.shape:
            raise ValueError("mask shape does not match")
        pred, truth = pred[mask], truth[mask]
    pred = pred.astype(np.int64).ravel()
    truth = truth.astype(np.int64).ravel()
    if label_names is not None:
        n_labels = len(label_names)
    if n_labels is None:
        n_labels = int(max(pred.max(initial=0), truth.max(initial=0))) + 1
    for name, a in (("prediction", pred), ("truth", truth)):
        if a.size and (a.min() < 0 or a.max() >= n_labels):
            raise ValueError(f"{name} label id out of range for {n_labels} labels")
    counts = np.bincount(truth * n_labels + pred, minlength=n_labels * n_labels)
    names = tuple(label_names) if label_names is not None else tuple(
        str(i) for i in range(n_labels))
    return ConfusionMatrix(counts.reshape(n_labels, n_labels), names)


def _counts(matrix) -> np.ndarray:
    return np.asarray(getattr(matrix, "counts", matrix))


def iou(matrix, label: int) -> float | None:
    """TP / (TP + FP + FN); ``None`` when the label is absent from both sides."""
    m = _counts(matrix)
    tp = m[label, label]
    union = m[label, :].sum() + m[:, label].sum() - tp
    if union == 0:
        return None
    return float(tp / union)


def overall_accuracy(matrix) -> float:
    m = _counts(matrix)
    total = m.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(m) / total)


def recall(matrix, label: int) -> float | None:
    m = _counts(matrix)
    row = m[label, :].sum()
    return None if row == 0 else float(m[label, label] / row)


def format_report(matrix: ConfusionMatrix, title: str = "") -> str:
    """Per-label IoU table and confusion matrix with row and column percentages."""
    m = matrix.counts
    names = matrix.label_names
    w = max(12, max(len(n) for n in names) + 2)
    lines = [title] if title else []
    lines.append(f"{'label':<{w}}{'IoU':>9}")
    for i, name in enumerate(names):
        v = iou(m, i)
        lines.append(f"{name:<{w}}{'n/a' if v is None else f'{100 * v:.1f}%':>9}")
    lines.append(f"{'voxel accuracy':<{w}}{100 * overall_accuracy(m):>8.1f}%")
    lines.append("")
    rows = m.sum(axis=1, keepdims=True)
    cols = m.sum(axis=0, keepdims=True)
    for heading, pct in (("confusion (% of true label)", m / np.maximum(rows, 1)),
                         ("confusion (% of predicted label)", m / np.maximum(cols, 1))):
        lines.append(heading + ", rows=true, cols=predicted")
        lines.append(" " * w + "".join(f"{n[:9]:>10}" for n in names))
        for i, name in enumerate(names):
            lines.append(f"{name:<{w}}" + "".join(f"{100 * p:>9.1f}%" for p in pct[i]))
        lines.append("")
    lines.append("counts, rows=true, cols=predicted")
    for i, name in enumerate(names):
        lines.append(f"{name:<{w}}" + "".join(f"{c:>10d}" for c in m[i]))
    return "\n".join(lines) + "\n"


def metrics_dict(matrix: ConfusionMatrix) -> dict:
    return {
        "labels": list(matrix.label_names),
        "iou": {n: iou(matrix, i) for i, n in enumerate(matrix.label_names)},
        "voxel_accuracy": overall_accuracy(matrix),
        "confusion": matrix.counts.tolist(),
    }
