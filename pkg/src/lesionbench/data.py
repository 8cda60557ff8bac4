"""Dataset manifests for lesion-image experiments.

A manifest is an ordered collection of :class:`ImageRecord` plus the class
name vocabulary.  On disk it is a JSONL file whose first line is a header::

    {"schema_version": 1, "class_names": ["acne", "eczema", ...]}

followed by one record object per line.  All boxes use 0-based pixel
coordinates with half-open intervals ``[xmin, xmax) x [ymin, ymax)``, i.e.
``xmax``/``ymax`` are one past the last lesion pixel.
"""

from __future__ import annotations

import hashlib
import json
import os
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SCHEMA_VERSION = 1
SPLIT_VALUES = ("train", "test", "unassigned")


class ManifestError(ValueError):
    """A manifest file, record or annotation violates the expected format."""


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned lesion box in 0-based half-open pixel coordinates."""

    xmin: int
    ymin: int
    xmax: int
    ymax: int
    class_id: int

    def __post_init__(self) -> None:
        for name in ("xmin", "ymin", "xmax", "ymax", "class_id"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ManifestError(f"box field {name!r} must be an int, got {value!r}")
        if not (0 <= self.xmin < self.xmax):
            raise ManifestError(
                f"degenerate box: require 0 <= xmin < xmax, got xmin={self.xmin} xmax={self.xmax}"
            )
        if not (0 <= self.ymin < self.ymax):
            raise ManifestError(
                f"degenerate box: require 0 <= ymin < ymax, got ymin={self.ymin} ymax={self.ymax}"
            )
        if self.class_id < 0:
            raise ManifestError(f"box class_id must be >= 0, got {self.class_id}")

    @property
    def width(self) -> int:
        return self.xmax - self.xmin

    @property
    def height(self) -> int:
        return self.ymax - self.ymin

    @property
    def area(self) -> int:
        return self.width * self.height

    def to_dict(self) -> dict:
        return {
            "xmin": self.xmin,
            "ymin": self.ymin,
            "xmax": self.xmax,
            "ymax": self.ymax,
            "class_id": self.class_id,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "BoundingBox":
        if not isinstance(obj, dict):
            raise ManifestError(f"box must be an object, got {type(obj).__name__}")
        missing = [k for k in ("xmin", "ymin", "xmax", "ymax", "class_id") if k not in obj]
        if missing:
            raise ManifestError(f"box missing fields: {', '.join(missing)}")
        return cls(
            xmin=obj["xmin"],
            ymin=obj["ymin"],
            xmax=obj["xmax"],
            ymax=obj["ymax"],
            class_id=obj["class_id"],
        )


@dataclass(frozen=True)
class ImageRecord:
    """One labelled image: identity, file location, class, split and boxes."""

    image_id: str
    path: str
    class_id: int
    split: str = "unassigned"
    boxes: tuple[BoundingBox, ...] = ()
    noise_flag: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.image_id, str) or not self.image_id:
            raise ManifestError(f"image_id must be a non-empty string, got {self.image_id!r}")
        if not isinstance(self.path, str) or not self.path:
            raise ManifestError(f"record {self.image_id!r}: path must be a non-empty string")
        if not isinstance(self.class_id, int) or isinstance(self.class_id, bool) or self.class_id < 0:
            raise ManifestError(
                f"record {self.image_id!r}: class_id must be a non-negative int, got {self.class_id!r}"
            )
        if self.split not in SPLIT_VALUES:
            raise ManifestError(
                f"record {self.image_id!r}: split must be one of {SPLIT_VALUES}, got {self.split!r}"
            )
        if not isinstance(self.boxes, tuple):
            object.__setattr__(self, "boxes", tuple(self.boxes))
        if not isinstance(self.noise_flag, bool):
            raise ManifestError(f"record {self.image_id!r}: noise_flag must be a bool")

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "path": self.path,
            "class_id": self.class_id,
            "split": self.split,
            "boxes": [b.to_dict() for b in self.boxes],
            "noise_flag": self.noise_flag,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ImageRecord":
        if not isinstance(obj, dict):
            raise ManifestError(f"record must be an object, got {type(obj).__name__}")
        missing = [k for k in ("image_id", "path", "class_id") if k not in obj]
        if missing:
            raise ManifestError(f"record missing fields: {', '.join(missing)}")
        boxes = obj.get("boxes", [])
        if not isinstance(boxes, list):
            raise ManifestError("record field 'boxes' must be a list")
        return cls(
            image_id=obj["image_id"],
            path=obj["path"],
            class_id=obj["class_id"],
            split=obj.get("split", "unassigned"),
            boxes=tuple(BoundingBox.from_dict(b) for b in boxes),
            noise_flag=obj.get("noise_flag", False),
        )


@dataclass(frozen=True)
class ClassStats:
    """Per-class sample counts for a manifest (train / test / overall)."""

    train: tuple[int, ...]
    test: tuple[int, ...]
    total: tuple[int, ...]

    def __post_init__(self) -> None:
        if not (len(self.train) == len(self.test) == len(self.total)):
            raise ValueError("train/test/total count vectors must have equal length")
        for c, (tr, te, to) in enumerate(zip(self.train, self.test, self.total)):
            if min(tr, te, to) < 0:
                raise ValueError(f"class {c}: counts must be non-negative")
            if tr + te > to:
                raise ValueError(f"class {c}: train+test={tr + te} exceeds total={to}")

    @property
    def num_classes(self) -> int:
        return len(self.total)

    @property
    def n_samples(self) -> int:
        return int(sum(self.total))


@dataclass
class DatasetManifest:
    """An ordered set of image records plus the class vocabulary.

    ``root`` is the directory that relative record paths are resolved
    against; it is set by :func:`load_manifest` and by dataset generators
    and is not part of the on-disk format.
    """

    records: tuple[ImageRecord, ...]
    class_names: tuple[str, ...]
    schema_version: int = SCHEMA_VERSION
    root: Path | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        self.records = tuple(self.records)
        self.class_names = tuple(self.class_names)
        if self.schema_version != SCHEMA_VERSION:
            raise ManifestError(
                f"unsupported schema_version {self.schema_version!r} (expected {SCHEMA_VERSION})"
            )
        if not self.class_names:
            raise ManifestError("class_names must be non-empty")
        if len(set(self.class_names)) != len(self.class_names):
            raise ManifestError("class_names must be distinct")
        if any(not isinstance(n, str) or not n for n in self.class_names):
            raise ManifestError("class_names must be non-empty strings")
        seen: set[str] = set()
        for rec in self.records:
            if rec.image_id in seen:
                raise ManifestError(f"duplicate image_id {rec.image_id!r}")
            seen.add(rec.image_id)
            if rec.class_id >= len(self.class_names):
                raise ManifestError(
                    f"record {rec.image_id!r}: class_id {rec.class_id} out of range "
                    f"for {len(self.class_names)} classes"
                )

    # -- views --------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def subset(self, split: str) -> "DatasetManifest":
        """Manifest restricted to records whose split equals ``split``."""
        if split not in SPLIT_VALUES:
            raise ValueError(f"split must be one of {SPLIT_VALUES}, got {split!r}")
        return replace(self, records=tuple(r for r in self.records if r.split == split))

    def labels(self) -> np.ndarray:
        return np.array([r.class_id for r in self.records], dtype=np.int64)

    def resolve_path(self, record: ImageRecord) -> Path:
        p = Path(record.path)
        if p.is_absolute() or self.root is None:
            return p
        return self.root / p

    def content_hash(self) -> str:
        """SHA-256 of the canonical serialized form (root excluded)."""
        return hashlib.sha256(dumps_manifest(self).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# JSONL persistence


def dumps_manifest(manifest: DatasetManifest) -> str:
    header = {"schema_version": manifest.schema_version, "class_names": list(manifest.class_names)}
    lines = [json.dumps(header, separators=(",", ":"))]
    lines.extend(json.dumps(rec.to_dict(), separators=(",", ":")) for rec in manifest.records)
    return "\n".join(lines) + "\n"


def save_manifest(manifest: DatasetManifest, path: str | Path) -> Path:
    """Write a manifest as JSONL (header line + one record per line)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_manifest(manifest), encoding="utf-8")
    return path


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read a JSONL manifest; errors cite the offending 1-based line number."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ManifestError(f"manifest file not found: {path}") from None

    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ManifestError(f"{path}: line 1: missing header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: line 1: invalid JSON in header: {exc}") from None
    if not isinstance(header, dict) or "schema_version" not in header or "class_names" not in header:
        raise ManifestError(
            f"{path}: line 1: header must be an object with schema_version and class_names"
        )
    if header["schema_version"] != SCHEMA_VERSION:
        raise ManifestError(
            f"{path}: line 1: unsupported schema_version {header['schema_version']!r}"
        )
    class_names = header["class_names"]
    if not isinstance(class_names, list) or not class_names:
        raise ManifestError(f"{path}: line 1: class_names must be a non-empty list")

    records: list[ImageRecord] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue  # tolerate blank lines (e.g. trailing newline)
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: line {lineno}: invalid JSON: {exc}") from None
        try:
            rec = ImageRecord.from_dict(obj)
        except ManifestError as exc:
            raise ManifestError(f"{path}: line {lineno}: {exc}") from None
        if rec.image_id in seen:
            raise ManifestError(
                f"{path}: line {lineno}: duplicate image_id {rec.image_id!r} "
                f"(first seen on line {seen[rec.image_id]})"
            )
        if rec.class_id >= len(class_names):
            raise ManifestError(
                f"{path}: line {lineno}: class_id {rec.class_id} out of range "
                f"for {len(class_names)} classes"
            )
        seen[rec.image_id] = lineno
        records.append(rec)

    return DatasetManifest(
        records=tuple(records),
        class_names=tuple(class_names),
        schema_version=SCHEMA_VERSION,
        root=path.parent,
    )


# ---------------------------------------------------------------------------
# Pascal-VOC annotation parsing


def parse_voc_annotation(xml_text: str, class_names: Sequence[str]) -> tuple[BoundingBox, ...]:
    """Extract lesion boxes from a Pascal-VOC XML annotation document.

    One box per ``<object>`` entry, in document order.  Coordinates are
    taken verbatim from the ``<bndbox>`` fields; class names are resolved
    against ``class_names``.  Degenerate boxes (``xmax <= xmin`` or
    ``ymax <= ymin``), unknown class names and malformed XML all raise
    :class:`ManifestError`.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise ManifestError(f"malformed VOC XML: {exc}") from None

    name_to_id = {name: i for i, name in enumerate(class_names)}
    boxes: list[BoundingBox] = []
    for obj in root.iter("object"):
        name_el = obj.find("name")
        if name_el is None or name_el.text is None:
            raise ManifestError("VOC object is missing a <name> element")
        name = name_el.text.strip()
        if name not in name_to_id:
            raise ManifestError(f"unknown class name {name!r} in VOC annotation")
        bnd = obj.find("bndbox")
        if bnd is None:
            raise ManifestError(f"VOC object {name!r} is missing a <bndbox> element")
        coords = {}
        for key in ("xmin", "ymin", "xmax", "ymax"):
            el = bnd.find(key)
            if el is None or el.text is None:
                raise ManifestError(f"VOC bndbox is missing <{key}>")
            try:
                coords[key] = int(float(el.text.strip()))
            except ValueError:
                raise ManifestError(f"VOC bndbox <{key}> is not numeric: {el.text!r}") from None
        try:
            boxes.append(
                BoundingBox(
                    xmin=coords["xmin"],
                    ymin=coords["ymin"],
                    xmax=coords["xmax"],
                    ymax=coords["ymax"],
                    class_id=name_to_id[name],
                )
            )
        except ManifestError as exc:
            raise ManifestError(f"VOC object {name!r}: {exc}") from None
    return tuple(boxes)


# ---------------------------------------------------------------------------
# splitting, cleaning, statistics


def split_dataset(
    manifest: DatasetManifest,
    test_fraction: float = 0.2,
    seed: int = 0,
    allow_resplit: bool = False,
) -> DatasetManifest:
    """Assign every record to train or test, stratified per class.

    Within each class the records are ordered by ``image_id``, shuffled by
    a per-class generator seeded with ``(seed, class_id)``, and the first
    ``round(n_c * test_fraction)`` (banker's rounding, clamped to
    ``[1, n_c - 1]``) go to test.  Each class therefore contributes at
    least one record to each side, which requires ``n_c >= 2``.
    """
    if not (0.0 < test_fraction < 1.0):
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ValueError(f"seed must be a non-negative int, got {seed!r}")
    if not allow_resplit and any(r.split != "unassigned" for r in manifest.records):
        raise ValueError(
            "manifest already contains split assignments; pass allow_resplit=True to re-split"
        )
    if len(manifest) == 0:
        raise ValueError("cannot split an empty manifest")

    by_class: dict[int, list[int]] = {}
    for idx, rec in enumerate(manifest.records):
        by_class.setdefault(rec.class_id, []).append(idx)

    too_small = sorted(c for c, idxs in by_class.items() if len(idxs) < 2)
    if too_small:
        names = ", ".join(f"{c} ({manifest.class_names[c]!r})" for c in too_small)
        raise ValueError(f"classes with fewer than 2 records cannot be split: {names}")

    assignment: dict[int, str] = {}
    for class_id in sorted(by_class):
        idxs = sorted(by_class[class_id], key=lambda i: manifest.records[i].image_id)
        n_c = len(idxs)
        n_test = int(round(n_c * test_fraction))
        n_test = min(max(n_test, 1), n_c - 1)
        rng = np.random.default_rng([seed, class_id])
        perm = rng.permutation(n_c)
        for pos, j in enumerate(perm):
            assignment[idxs[j]] = "test" if pos < n_test else "train"

    new_records = tuple(
        replace(rec, split=assignment[idx]) for idx, rec in enumerate(manifest.records)
    )
    return replace(manifest, records=new_records)


def rebase_manifest(manifest: DatasetManifest, new_root: str | Path) -> DatasetManifest:
    """Rewrite record paths so the manifest can be saved under ``new_root``.

    Every record still resolves to the same file; paths become relative to
    ``new_root``.  Use this before saving a derived manifest (a split or a
    cleaned copy) into a different directory than its source.
    """
    new_root = Path(new_root).resolve()
    records = []
    for rec in manifest.records:
        target = manifest.resolve_path(rec).resolve()
        try:
            rel = os.path.relpath(target, new_root)
        except ValueError:  # cross-drive on Windows; keep the absolute path
            rel = str(target)
        records.append(replace(rec, path=str(rel)))
    return replace(manifest, records=tuple(records), root=new_root)


def clean_dataset(manifest: DatasetManifest) -> tuple[DatasetManifest, int]:
    """Drop all records with ``noise_flag`` set; return (manifest, n_removed)."""
    kept = tuple(r for r in manifest.records if not r.noise_flag)
    removed = len(manifest.records) - len(kept)
    return replace(manifest, records=kept), removed


def class_stats(manifest: DatasetManifest) -> ClassStats:
    """Per-class train/test/total counts over all records in the manifest."""
    C = manifest.num_classes
    train = [0] * C
    test = [0] * C
    total = [0] * C
    for rec in manifest.records:
        total[rec.class_id] += 1
        if rec.split == "train":
            train[rec.class_id] += 1
        elif rec.split == "test":
            test[rec.class_id] += 1
    return ClassStats(train=tuple(train), test=tuple(test), total=tuple(total))


def sample_weights(labels: Sequence[int], n: int | None = None) -> np.ndarray:
    """Frequency weights ``w_i = n_{y_i} / N`` for a batch of labels.

    ``n`` is the batch size and must equal ``len(labels)`` when given; the
    resulting vector sums to ``sum_c n_c**2 / N``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {labels.shape}")
    if n is None:
        n = labels.shape[0]
    if n <= 0:
        raise ValueError(f"batch size must be positive, got N={n}")
    if labels.shape[0] != n:
        raise ValueError(f"expected {n} labels, got {labels.shape[0]}")
    if labels.min() < 0:
        raise ValueError("labels must be non-negative")
    counts = Counter(int(y) for y in labels)
    return np.array([counts[int(y)] / n for y in labels], dtype=np.float64)


def records_from_iter(
    rows: Iterable[tuple[str, str, int]],
    class_names: Sequence[str],
) -> DatasetManifest:
    """Build a manifest from ``(image_id, path, class_id)`` triples."""
    records = tuple(ImageRecord(image_id=i, path=p, class_id=c) for i, p, c in rows)
    return DatasetManifest(records=records, class_names=tuple(class_names))
