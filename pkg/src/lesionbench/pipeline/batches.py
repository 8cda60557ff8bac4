"""Per-model probability batches and their JSON-Lines persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ROW_SUM_TOL = 1e-6


@dataclass
class PredictionBatch:
    """Probability rows over C classes for a fixed, ordered set of samples.

    Model outputs are distributions (``normalized=True``, rows sum to 1
    within ``ROW_SUM_TOL``).  Summed ensemble scores reuse this type with
    ``normalized=False``: entries stay finite and non-negative but rows sum
    to the member count, which is harmless because only score orderings
    feed the metrics.
    """

    sample_ids: tuple[str, ...]
    probs: np.ndarray  # (N, C)
    model_id: str
    normalized: bool = True

    def __post_init__(self) -> None:
        self.sample_ids = tuple(self.sample_ids)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if not self.model_id:
            raise ValueError("model_id must be non-empty")
        if self.probs.ndim != 2:
            raise ValueError(f"probs must be 2-D (N, C), got shape {self.probs.shape}")
        if len(self.sample_ids) != self.probs.shape[0]:
            raise ValueError(
                f"{len(self.sample_ids)} sample_ids but {self.probs.shape[0]} probability rows"
            )
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise ValueError("sample_ids must be distinct")
        if self.probs.size:
            if not np.isfinite(self.probs).all():
                raise ValueError("probabilities must be finite")
            if self.probs.min() < -ROW_SUM_TOL:
                raise ValueError("probabilities must be non-negative")
            if self.normalized:
                if self.probs.max() > 1.0 + ROW_SUM_TOL:
                    raise ValueError("probabilities must lie in [0, 1]")
                sums = self.probs.sum(axis=1)
                bad = np.where(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
                if bad.size:
                    raise ValueError(
                        f"row {bad[0]} ({self.sample_ids[bad[0]]!r}) sums to {sums[bad[0]]:.8f}, "
                        f"expected 1 within {ROW_SUM_TOL}"
                    )

    @property
    def n_samples(self) -> int:
        return self.probs.shape[0]

    @property
    def num_classes(self) -> int:
        return self.probs.shape[1]


def save_predictions(batch: PredictionBatch, path: str | Path) -> Path:
    """One JSON object per sample: {"sample_id", "probs", "model_id"}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for sid, row in zip(batch.sample_ids, batch.probs):
            obj = {"sample_id": sid, "probs": row.tolist(), "model_id": batch.model_id}
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")
    return path


def load_predictions(path: str | Path) -> PredictionBatch:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise ValueError(f"prediction log not found: {path}") from None
    sample_ids: list[str] = []
    rows: list[list[float]] = []
    model_ids: set[str] = set()
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: line {lineno}: invalid JSON: {exc}") from None
        missing = [k for k in ("sample_id", "probs", "model_id") if k not in obj]
        if missing:
            raise ValueError(f"{path}: line {lineno}: missing fields: {', '.join(missing)}")
        sample_ids.append(obj["sample_id"])
        rows.append(obj["probs"])
        model_ids.add(obj["model_id"])
    if not rows:
        raise ValueError(f"{path}: prediction log is empty")
    if len(model_ids) != 1:
        raise ValueError(f"{path}: mixed model_ids in one log: {sorted(model_ids)}")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: inconsistent probability row lengths: {sorted(widths)}")
    return PredictionBatch(
        sample_ids=tuple(sample_ids),
        probs=np.asarray(rows, dtype=np.float64),
        model_id=model_ids.pop(),
    )
