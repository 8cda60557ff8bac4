"""Pluggable lesion detectors and detection-based classification.

Detector internals (anchors, NMS, proposal networks) are out of scope; a
detector here is anything that maps a presented image to scored boxes in
that image's coordinate frame.  The repo ships two plug-ins:

* ``oracle`` — perfect boxes from synthetic ground truth, for end-to-end
  verification;
* ``jsonl`` — replays a stored detection log, which doubles as the adapter
  contract for external detector processes: run the detector out-of-band,
  write one JSON line per image (`{"sample_id": ..., "boxes": [{"xmin": ...,
  "ymin": ..., "xmax": ..., "ymax": ..., "class_id": ..., "score": ...}]}`),
  and evaluate it here.

The classification rule is box-argmax: the image-level prediction is the
class of the single highest-confidence (box, class) pair; zero detections
is a real outcome scored as a misclassification, not an error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence, runtime_checkable

import numpy as np
from PIL import Image

from .data import BoundingBox
from .synthgen import SynthRecordTruth


@dataclass(frozen=True)
class ScoredBox:
    """A detected box with either one confidence or a full class-score row.

    Pair form (``score`` set): the detector emitted only its best class,
    taken from ``box.class_id``.  Vector form (``class_scores`` set): entry
    ``n`` is the box's probability of being class ``n``.
    """

    box: BoundingBox
    score: float | None = None
    class_scores: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if (self.score is None) == (self.class_scores is None):
            raise ValueError("exactly one of score / class_scores must be set")
        if self.score is not None and not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        if self.class_scores is not None:
            object.__setattr__(self, "class_scores", tuple(float(s) for s in self.class_scores))
            if not self.class_scores:
                raise ValueError("class_scores must be non-empty")
            if any(not (0.0 <= s <= 1.0) for s in self.class_scores):
                raise ValueError(f"class_scores must lie in [0, 1], got {self.class_scores}")

    def candidates(self) -> tuple[tuple[int, float], ...]:
        """All (class_id, score) pairs this box proposes, class-ascending."""
        if self.score is not None:
            return ((self.box.class_id, float(self.score)),)
        return tuple(enumerate(self.class_scores))

    def best(self) -> tuple[int, float]:
        """Highest-scored class (ties to the lower class index)."""
        pairs = self.candidates()
        best = pairs[0]
        for pair in pairs[1:]:
            if pair[1] > best[1]:
                best = pair
        return best


@dataclass(frozen=True)
class DetectionSet:
    """All detections for one image (possibly none)."""

    sample_id: str
    boxes: tuple[ScoredBox, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "boxes", tuple(self.boxes))

    @property
    def m_boxes(self) -> int:
        return len(self.boxes)


@dataclass(frozen=True)
class DetectorConfig:
    """Harness-side settings; detector internals configure themselves."""

    detector_id: str
    input_size: tuple[int, int] = (400, 400)  # (H, W) presented to the plug-in
    score_threshold: float = 0.05
    focal_alpha: float = 0.25  # loss descriptor for detectors trained in-repo
    focal_gamma: float = 2.0
    fallback_to_classifier: bool = False  # no-detection images go to a full-image model

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_size", tuple(int(s) for s in self.input_size))
        if not self.detector_id:
            raise ValueError("detector_id must be non-empty")
        if len(self.input_size) != 2 or any(s < 1 for s in self.input_size):
            raise ValueError(f"input_size must be positive (H, W), got {self.input_size}")
        if not (0.0 <= self.score_threshold < 1.0):
            raise ValueError(f"score_threshold must be in [0, 1), got {self.score_threshold}")
        if self.focal_alpha <= 0 or self.focal_gamma < 0:
            raise ValueError("focal descriptor requires alpha > 0 and gamma >= 0")


@runtime_checkable
class Detector(Protocol):
    """Plug-in contract: boxes in the presented image's coordinate frame."""

    detector_id: str
    concurrency_safe: bool

    def detect(self, image: np.ndarray, sample_id: str | None = None) -> Sequence[ScoredBox]:
        ...  # pragma: no cover


def _scale_box(box: BoundingBox, from_size: tuple[int, int], to_size: tuple[int, int]) -> BoundingBox:
    """Map a box between image sizes ((H, W) each), clamped to bounds."""
    fh, fw = from_size
    th, tw = to_size
    sx, sy = tw / fw, th / fh
    xmin = int(round(box.xmin * sx))
    xmax = int(round(box.xmax * sx))
    ymin = int(round(box.ymin * sy))
    ymax = int(round(box.ymax * sy))
    xmin = max(0, min(xmin, tw - 1))
    ymin = max(0, min(ymin, th - 1))
    xmax = max(xmin + 1, min(xmax, tw))
    ymax = max(ymin + 1, min(ymax, th))
    return BoundingBox(xmin=xmin, ymin=ymin, xmax=xmax, ymax=ymax, class_id=box.class_id)


class OracleDetector:
    """Returns the exact ground-truth box (score 1.0) for known samples."""

    concurrency_safe = True

    def __init__(self, truths: Mapping[str, SynthRecordTruth], detector_id: str = "oracle"):
        self.detector_id = detector_id
        self._truths = dict(truths)

    def detect(self, image: np.ndarray, sample_id: str | None = None) -> tuple[ScoredBox, ...]:
        truth = self._truths.get(sample_id) if sample_id is not None else None
        if truth is None or truth.box is None:
            return ()
        presented = (image.shape[0], image.shape[1])
        box = _scale_box(truth.box, truth.image_size, presented)
        return (ScoredBox(box=box, score=1.0),)


class JsonlDetector:
    """Replays a stored detection log; the external-adapter endpoint."""

    concurrency_safe = True

    def __init__(self, log: Mapping[str, DetectionSet] | str | Path, detector_id: str = "jsonl"):
        self.detector_id = detector_id
        if isinstance(log, (str, Path)):
            sets = load_detections(log)
            self._sets = {d.sample_id: d for d in sets}
        else:
            self._sets = dict(log)

    def detect(self, image: np.ndarray, sample_id: str | None = None) -> tuple[ScoredBox, ...]:
        if sample_id is None or sample_id not in self._sets:
            return ()
        return self._sets[sample_id].boxes


def detect(detector: Detector, image: np.ndarray, cfg: DetectorConfig, sample_id: str | None = None) -> DetectionSet:
    """Run one image through a detector plug-in.

    The image is resized to ``cfg.input_size`` before the plug-in sees it;
    returned boxes are threshold-filtered and mapped back to the original
    image space (within +/-1 pixel of a direct-space box).
    """
    image = np.asarray(image)
    if image.ndim not in (2, 3) or image.shape[0] < 1 or image.shape[1] < 1:
        raise ValueError(f"unreadable image with shape {image.shape}")
    orig_size = (image.shape[0], image.shape[1])
    h, w = cfg.input_size
    pil = Image.fromarray(image.astype(np.uint8) if image.dtype != np.uint8 else image)
    presented = np.asarray(pil.resize((w, h), Image.BILINEAR))

    kept: list[ScoredBox] = []
    for sbox in detector.detect(presented, sample_id=sample_id):
        if sbox.best()[1] < cfg.score_threshold:
            continue
        mapped = _scale_box(sbox.box, cfg.input_size, orig_size)
        if sbox.score is not None:
            kept.append(ScoredBox(box=mapped, score=sbox.score))
        else:
            kept.append(ScoredBox(box=mapped, class_scores=sbox.class_scores))
    return DetectionSet(sample_id=sample_id or "", boxes=tuple(kept))


def box_argmax(dets: DetectionSet) -> tuple[ScoredBox, int, float] | None:
    """The best (box, class, score) triple over all detections, or None.

    Maximizes the score over every box and every class the box proposes;
    ties break toward the earlier box, then the lower class index.
    """
    best: tuple[ScoredBox, int, float] | None = None
    for sbox in dets.boxes:
        for class_id, score in sbox.candidates():
            if best is None or score > best[2]:
                best = (sbox, class_id, score)
    return best


def box_argmax_classify(dets: DetectionSet) -> tuple[int, float] | None:
    """The (class, confidence) of the best (box, class) pair, or None.

    An empty detection set yields ``None`` — the no-detection outcome,
    which scoring treats as incorrect.
    """
    best = box_argmax(dets)
    return None if best is None else (best[1], best[2])


@dataclass(frozen=True)
class DetectionScore:
    """Micro and per-class accuracy of box-argmax outcomes."""

    overall: float
    per_class: tuple[float, ...]  # NaN for classes absent from the labels
    class_counts: tuple[int, ...]
    n_no_detection: int

    @property
    def num_classes(self) -> int:
        return len(self.per_class)


def detection_accuracy(
    outcomes: Sequence[tuple[int, float] | int | None],
    labels: Sequence[int],
    num_classes: int,
) -> DetectionScore:
    """Score per-sample outcomes against labels; None counts as incorrect."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(outcomes) != labels.shape[0]:
        raise ValueError(f"{len(outcomes)} outcomes for {labels.shape[0]} labels")
    if labels.size == 0:
        raise ValueError("empty outcome set")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(f"labels out of range [0, {num_classes})")

    predicted: list[int | None] = []
    for outcome in outcomes:
        if outcome is None:
            predicted.append(None)
        elif isinstance(outcome, tuple):
            predicted.append(int(outcome[0]))
        else:
            predicted.append(int(outcome))

    correct_per_class = np.zeros(num_classes, dtype=np.int64)
    counts = np.bincount(labels, minlength=num_classes)
    for pred, label in zip(predicted, labels):
        if pred is not None and pred == label:
            correct_per_class[label] += 1
    per_class = np.full(num_classes, np.nan)
    present = counts > 0
    per_class[present] = correct_per_class[present] / counts[present]
    return DetectionScore(
        overall=int(correct_per_class.sum()) / labels.shape[0],
        per_class=tuple(per_class.tolist()),
        class_counts=tuple(int(c) for c in counts),
        n_no_detection=sum(1 for p in predicted if p is None),
    )


# ---------------------------------------------------------------------------
# detector registry


_DETECTOR_REGISTRY: dict[str, object] = {}


def register_detector(detector_id: str, factory, overwrite: bool = False) -> None:
    """Register ``factory(cfg: DetectorConfig, options: dict) -> Detector``."""
    if not detector_id:
        raise ValueError("detector_id must be non-empty")
    if detector_id in _DETECTOR_REGISTRY and not overwrite:
        raise ValueError(f"detector {detector_id!r} is already registered")
    _DETECTOR_REGISTRY[detector_id] = factory


def create_detector(cfg: DetectorConfig, options: dict | None = None) -> Detector:
    try:
        factory = _DETECTOR_REGISTRY[cfg.detector_id]
    except KeyError:
        raise ValueError(
            f"unregistered detector {cfg.detector_id!r}; known: {sorted(_DETECTOR_REGISTRY)}"
        ) from None
    return factory(cfg, options or {})


def _oracle_factory(cfg: DetectorConfig, options: dict) -> OracleDetector:
    from .synthgen import load_truth, truth_by_id

    truth_path = options.get("truth")
    if truth_path is None:
        raise ValueError("oracle detector needs options['truth'] = path to truth.jsonl")
    _, truths = load_truth(truth_path)
    return OracleDetector(truth_by_id(truths), detector_id=cfg.detector_id)


def _jsonl_factory(cfg: DetectorConfig, options: dict) -> JsonlDetector:
    log_path = options.get("log")
    if log_path is None:
        raise ValueError("jsonl detector needs options['log'] = path to a detection log")
    return JsonlDetector(log_path, detector_id=cfg.detector_id)


register_detector("oracle", _oracle_factory)
register_detector("jsonl", _jsonl_factory)


# ---------------------------------------------------------------------------
# detection-log persistence


def _boxes_to_json(dets: DetectionSet) -> dict:
    boxes = []
    for sbox in dets.boxes:
        class_id, score = sbox.best()
        boxes.append(
            {
                "xmin": sbox.box.xmin,
                "ymin": sbox.box.ymin,
                "xmax": sbox.box.xmax,
                "ymax": sbox.box.ymax,
                "class_id": class_id,
                "score": score,
            }
        )
    return {"sample_id": dets.sample_id, "boxes": boxes}


def save_detections(sets: Sequence[DetectionSet], path: str | Path) -> Path:
    """Write one JSON line per image; vector boxes collapse to their best pair."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for dets in sets:
            fh.write(json.dumps(_boxes_to_json(dets), separators=(",", ":")) + "\n")
    return path


def load_detections(path: str | Path) -> list[DetectionSet]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise ValueError(f"detection log not found: {path}") from None
    sets: list[DetectionSet] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
            boxes = tuple(
                ScoredBox(
                    box=BoundingBox(
                        xmin=b["xmin"],
                        ymin=b["ymin"],
                        xmax=b["xmax"],
                        ymax=b["ymax"],
                        class_id=b["class_id"],
                    ),
                    score=b["score"],
                )
                for b in obj["boxes"]
            )
            dets = DetectionSet(sample_id=obj["sample_id"], boxes=boxes)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: line {lineno}: bad detection record: {exc}") from None
        if dets.sample_id in seen:
            raise ValueError(f"{path}: line {lineno}: duplicate sample_id {dets.sample_id!r}")
        seen.add(dets.sample_id)
        sets.append(dets)
    return sets
