"""Imbalance-aware evaluation: top-k sets, weighted accuracy, confusion matrices.

Two readings of "weighted accuracy" are provided.  The normalized one,
:func:`topk_weighted_accuracy`, is the frequency-weighted mean of per-class
top-k accuracies, `sum_c (n_c / N) * acc_c`; it is bounded in [0, 1] and
algebraically equal to plain micro accuracy (hits / N).  The literal
per-sample weighted sum `sum_i Z_i * n_{y_i} / N`
(:func:`unnormalized_weighted_topk`) can exceed 1 on imbalanced data — a
perfect classifier scores `sum_c n_c^2 / N^2 * N`; it is kept for
auditability, not for reporting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class EvaluationBatch:
    """Probability rows plus true labels for one evaluation pass."""

    probs: np.ndarray  # (N, C) scores; rows need not be normalized
    labels: np.ndarray  # (N,) int class ids

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.probs.ndim != 2:
            raise ValueError(f"probs must be 2-D (N, C), got shape {self.probs.shape}")
        if self.labels.ndim != 1:
            raise ValueError(f"labels must be 1-D, got shape {self.labels.shape}")
        if self.probs.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"probs rows ({self.probs.shape[0]}) and labels ({self.labels.shape[0]}) differ"
            )
        if not np.isfinite(self.probs).all():
            raise ValueError("probs must be finite")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(
                f"labels must lie in [0, {self.num_classes}), got range "
                f"[{self.labels.min()}, {self.labels.max()}]"
            )

    @property
    def n_samples(self) -> int:
        return self.probs.shape[0]

    @property
    def num_classes(self) -> int:
        return self.probs.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def _check_k(k: int, num_classes: int) -> None:
    if not (1 <= k <= num_classes):
        raise ValueError(f"k must be in [1, {num_classes}], got {k}")


def _check_nonempty(batch: EvaluationBatch) -> None:
    if batch.n_samples == 0:
        raise ValueError("empty evaluation batch")


def topk_set(prob_row: np.ndarray, k: int) -> list[int]:
    """Labels of the k largest scores, descending, ties by ascending label."""
    row = np.asarray(prob_row, dtype=np.float64)
    if row.ndim != 1:
        raise ValueError(f"prob_row must be 1-D, got shape {row.shape}")
    _check_k(k, row.shape[0])
    # lexsort: primary key -score (descending), secondary key label index (ascending)
    order = np.lexsort((np.arange(row.shape[0]), -row))
    return [int(i) for i in order[:k]]


def topk_hits(batch: EvaluationBatch, k: int) -> np.ndarray:
    """Boolean per-sample indicator: true label is among the top-k labels."""
    _check_nonempty(batch)
    _check_k(k, batch.num_classes)
    hits = np.empty(batch.n_samples, dtype=bool)
    for i in range(batch.n_samples):
        hits[i] = int(batch.labels[i]) in topk_set(batch.probs[i], k)
    return hits


def top1_predictions(batch: EvaluationBatch) -> np.ndarray:
    """Highest-scored label per row (ties to the lowest label index)."""
    _check_nonempty(batch)
    return np.array([topk_set(row, 1)[0] for row in batch.probs], dtype=np.int64)


def per_class_topk_accuracy(batch: EvaluationBatch, k: int) -> np.ndarray:
    """Hit rate per true class; classes absent from the batch give NaN."""
    hits = topk_hits(batch, k)
    counts = batch.class_counts()
    acc = np.full(batch.num_classes, np.nan, dtype=np.float64)
    for c in range(batch.num_classes):
        if counts[c] > 0:
            acc[c] = hits[batch.labels == c].sum() / counts[c]
    return acc


def topk_weighted_accuracy(batch: EvaluationBatch, k: int) -> float:
    """Frequency-weighted per-class top-k accuracy, `sum_c (n_c/N) * acc_c`.

    Computed from integer hit counts, so it equals micro top-k accuracy
    (total hits / N) exactly, not merely within rounding.
    """
    hits = topk_hits(batch, k)
    return int(hits.sum()) / batch.n_samples


def macro_topk_accuracy(batch: EvaluationBatch, k: int) -> float:
    """Unweighted mean of per-class top-k accuracies (present classes only)."""
    acc = per_class_topk_accuracy(batch, k)
    present = ~np.isnan(acc)
    return float(acc[present].mean())


def unnormalized_weighted_topk(batch: EvaluationBatch, k: int) -> float:
    """The literal per-sample weighted hit sum `sum_i Z_i^k * n_{y_i} / N`.

    Unbounded above 1 on imbalanced data (see module docstring); computed
    by direct summation, not via the per-class simplification.
    """
    hits = topk_hits(batch, k)
    counts = batch.class_counts()
    n = batch.n_samples
    total = 0.0
    for i in range(n):
        if hits[i]:
            total += counts[int(batch.labels[i])] / n
    return float(total)


def confusion_matrix(predicted: np.ndarray, labels: np.ndarray, num_classes: int) -> np.ndarray:
    """C x C count matrix; entry (r, c) = samples of true class r predicted c."""
    predicted = np.asarray(predicted, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predicted.shape != labels.shape or predicted.ndim != 1:
        raise ValueError(
            f"predicted {predicted.shape} and labels {labels.shape} must be aligned 1-D"
        )
    for name, arr in (("predicted", predicted), ("labels", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"{name} out of range [0, {num_classes})")
    matrix = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(matrix, (labels, predicted), 1)
    return matrix


@dataclass
class EvaluationReport:
    """Everything a results table needs, for one model's predictions."""

    k_values: tuple[int, ...]
    class_counts: tuple[int, ...]
    per_class: dict[int, tuple[float, ...]]  # k -> per-class accuracy (NaN if absent)
    overall: dict[int, float]  # k -> weighted (== micro) accuracy
    macro: dict[int, float]  # k -> unweighted mean per-class accuracy
    confusion: np.ndarray  # top-1 confusion, rows = true class
    model_id: str = ""

    @property
    def num_classes(self) -> int:
        return len(self.class_counts)

    @property
    def n_samples(self) -> int:
        return int(sum(self.class_counts))

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "k_values": list(self.k_values),
            "class_counts": list(self.class_counts),
            "per_class": {str(k): list(v) for k, v in self.per_class.items()},
            "overall": {str(k): v for k, v in self.overall.items()},
            "macro": {str(k): v for k, v in self.macro.items()},
            "confusion": self.confusion.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "EvaluationReport":
        return cls(
            k_values=tuple(obj["k_values"]),
            class_counts=tuple(obj["class_counts"]),
            per_class={int(k): tuple(v) for k, v in obj["per_class"].items()},
            overall={int(k): v for k, v in obj["overall"].items()},
            macro={int(k): v for k, v in obj["macro"].items()},
            confusion=np.asarray(obj["confusion"], dtype=np.int64),
            model_id=obj.get("model_id", ""),
        )

    def save_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        return path

    def confusion_csv(self, path: str | Path) -> Path:
        path = Path(path)
        lines = [",".join(str(int(v)) for v in row) for row in self.confusion]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


def evaluate(batch: EvaluationBatch, k_values: tuple[int, ...] = (1,), model_id: str = "") -> EvaluationReport:
    """Assemble per-class, overall, macro and confusion results for each k."""
    _check_nonempty(batch)
    ks = tuple(sorted(set(int(k) for k in k_values)))
    for k in ks:
        _check_k(k, batch.num_classes)
    per_class = {k: tuple(per_class_topk_accuracy(batch, k).tolist()) for k in ks}
    overall = {k: topk_weighted_accuracy(batch, k) for k in ks}
    macro = {k: macro_topk_accuracy(batch, k) for k in ks}
    confusion = confusion_matrix(top1_predictions(batch), batch.labels, batch.num_classes)
    return EvaluationReport(
        k_values=ks,
        class_counts=tuple(int(c) for c in batch.class_counts()),
        per_class=per_class,
        overall=overall,
        macro=macro,
        confusion=confusion,
        model_id=model_id,
    )
