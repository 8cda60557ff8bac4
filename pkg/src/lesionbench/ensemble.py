"""Probability-sum ensembling and exhaustive subset search.

An ensemble's score row is the elementwise sum of its members' probability
rows.  Sums are deliberately left unnormalized: only argmax/top-k orderings
feed the metrics, and positive scaling never changes an ordering.  Pass
``normalize=True`` when a readable distribution is wanted (e.g. reports).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from .metrics import EvaluationBatch, topk_set, topk_weighted_accuracy
from .pipeline.batches import PredictionBatch

MAX_SEARCH_MEMBERS = 20

ENSEMBLE_ID_SEPARATOR = "+"


@dataclass(frozen=True)
class EnsembleSpec:
    """Which members to fuse; the rule is fixed as elementwise summation."""

    member_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "member_ids", tuple(self.member_ids))
        if len(self.member_ids) < 1:
            raise ValueError("an ensemble needs at least one member")
        if len(set(self.member_ids)) != len(self.member_ids):
            raise ValueError(f"member ids must be distinct, got {self.member_ids}")

    @property
    def k_members(self) -> int:
        return len(self.member_ids)


@dataclass(frozen=True)
class SubsetResult:
    """One evaluated member subset from the exhaustive search."""

    member_ids: tuple[str, ...]
    accuracies: dict[int, float]  # k -> weighted top-k accuracy
    rank: int  # 1-based position after sorting

    @property
    def top1(self) -> float:
        return self.accuracies[1]

    def to_dict(self) -> dict:
        return {
            "member_ids": list(self.member_ids),
            "accuracies": {str(k): v for k, v in self.accuracies.items()},
            "rank": self.rank,
        }


def _check_aligned(batches: Sequence[PredictionBatch]) -> None:
    if not batches:
        raise ValueError("need at least one prediction batch")
    first = batches[0]
    for other in batches[1:]:
        if other.sample_ids != first.sample_ids:
            raise ValueError(
                f"member {other.model_id!r} has different samples than {first.model_id!r} "
                "(ids must match in identical order)"
            )
        if other.num_classes != first.num_classes:
            raise ValueError(
                f"member {other.model_id!r} has {other.num_classes} classes, "
                f"{first.model_id!r} has {first.num_classes}"
            )


def ensemble_id(batches: Sequence[PredictionBatch]) -> str:
    return ENSEMBLE_ID_SEPARATOR.join(b.model_id for b in batches)


def ensemble_scores(
    batches: Sequence[PredictionBatch], normalize: bool = False
) -> PredictionBatch:
    """Elementwise sum of member probability rows; model_id = joined ids.

    The result is marked ``normalized=False`` unless ``normalize=True``
    rescales each row back to a distribution for readability.
    """
    _check_aligned(batches)
    total = np.zeros_like(batches[0].probs)
    for batch in batches:
        total = total + batch.probs
    if normalize:
        total = total / total.sum(axis=1, keepdims=True)
    return PredictionBatch(
        sample_ids=batches[0].sample_ids,
        probs=total,
        model_id=ensemble_id(batches),
        normalized=normalize,
    )


def ensemble_predict(batches: Sequence[PredictionBatch], k: int) -> list[list[int]]:
    """Per-sample top-k labels of the summed scores (ties to lower label)."""
    summed = ensemble_scores(batches)
    if not (1 <= k <= summed.num_classes):
        raise ValueError(f"k must be in [1, {summed.num_classes}], got {k}")
    return [topk_set(row, k) for row in summed.probs]


def search_subsets(
    batches: Sequence[PredictionBatch],
    labels: Sequence[int],
    k_values: Sequence[int] = (1,),
) -> list[SubsetResult]:
    """Evaluate every non-empty member subset (2^K - 1 of them).

    Results are sorted by top-1 accuracy descending; ties break toward the
    smaller subset, then lexicographically on member ids.  Top-1 is always
    evaluated, plus any additional requested k.
    """
    _check_aligned(batches)
    if len(batches) > MAX_SEARCH_MEMBERS:
        raise ValueError(
            f"exhaustive search supports at most {MAX_SEARCH_MEMBERS} members, got {len(batches)}"
        )
    ids = [b.model_id for b in batches]
    if len(set(ids)) != len(ids):
        raise ValueError(f"subset search needs distinct member model_ids, got {ids}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != batches[0].n_samples:
        raise ValueError(
            f"{labels.shape[0]} labels for {batches[0].n_samples} samples"
        )
    ks = tuple(sorted({1, *(int(k) for k in k_values)}))

    by_id = {b.model_id: b for b in batches}
    entries: list[tuple[tuple[str, ...], dict[int, float]]] = []
    for size in range(1, len(batches) + 1):
        for combo in combinations(sorted(by_id), size):
            summed = ensemble_scores([by_id[m] for m in combo])
            eval_batch = EvaluationBatch(probs=summed.probs, labels=labels)
            accs = {k: topk_weighted_accuracy(eval_batch, k) for k in ks}
            entries.append((combo, accs))

    entries.sort(key=lambda e: (-e[1][1], len(e[0]), e[0]))
    return [
        SubsetResult(member_ids=combo, accuracies=accs, rank=i + 1)
        for i, (combo, accs) in enumerate(entries)
    ]


def save_search_results(results: Sequence[SubsetResult], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"subsets": [r.to_dict() for r in results]}
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


def load_search_results(path: str | Path) -> list[SubsetResult]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        SubsetResult(
            member_ids=tuple(entry["member_ids"]),
            accuracies={int(k): v for k, v in entry["accuracies"].items()},
            rank=entry["rank"],
        )
        for entry in obj["subsets"]
    ]
