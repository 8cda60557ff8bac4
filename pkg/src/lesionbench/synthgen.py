"""Deterministic synthetic lesion-image datasets with exact ground truth.

Each record is a procedurally textured skin-tone background with (usually)
one parametric lesion blob: a rotated superellipse whose boundary radius is
modulated by a few low-frequency sinusoidal harmonics.  Class identity
controls the lesion's shape exponent and a disjoint hue band, so labels are
recoverable both by construction (the truth sidecar) and from pixels (a
nearest-mean-color readout on the box interior separates classes).

Determinism contract: every output is a pure function of the spec.  Record
``index`` draws its lesion parameters from ``rng([seed, 1, index])``, noise
selection from ``rng([seed, 2])``, and pixel rendering (background texture,
grain) from ``rng([seed, 3, index])``, so records can be generated or
re-rendered independently and in any order.
"""

from __future__ import annotations

import colorsys
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .data import BoundingBox, DatasetManifest, ImageRecord, ManifestError, save_manifest

TRUTH_SCHEMA_VERSION = 1

# class -> shape family: superellipse exponent cycle (ellipse, diamond,
# squircle, concave star, rounded-rect-ish)
SHAPE_EXPONENTS = (2.0, 1.2, 4.0, 0.8, 3.0)

# texture family -> (base skin RGB, coarse blotch grid size)
TEXTURE_FAMILIES = {
    0: ((0.80, 0.62, 0.52), 8),
    1: ((0.62, 0.45, 0.36), 6),
    2: ((0.72, 0.55, 0.47), 12),
}

_EDGE_WIDTH = 0.06  # soft boundary width, in units of normalized radius
_HUE_LO, _HUE_SPAN = 0.14, 0.82  # lesion hue wheel segment, clear of skin tones
_HUE_FILL = 0.55  # fraction of each class's band actually used (keeps gaps)


@dataclass(frozen=True)
class SynthSpec:
    """Generation recipe; every output artifact is a pure function of this."""

    class_counts: tuple[int, ...]
    image_size: tuple[int, int] = (96, 96)  # (H, W)
    lesion_area_range: tuple[float, float] = (0.05, 0.14)  # fraction of image area
    texture_family: int = 0
    noise_image_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "class_counts", tuple(int(n) for n in self.class_counts))
        object.__setattr__(self, "image_size", tuple(int(s) for s in self.image_size))
        object.__setattr__(self, "lesion_area_range", tuple(float(a) for a in self.lesion_area_range))
        if len(self.class_counts) < 2:
            raise ValueError(f"need at least 2 classes, got {len(self.class_counts)}")
        if any(n < 2 for n in self.class_counts):
            raise ValueError(f"every class needs >= 2 samples, got {self.class_counts}")
        if len(self.image_size) != 2 or any(s < 16 for s in self.image_size):
            raise ValueError(f"image_size must be (H, W) with H, W >= 16, got {self.image_size}")
        lo, hi = self.lesion_area_range
        if not (0.0 < lo <= hi < 1.0):
            raise ValueError(f"lesion_area_range must satisfy 0 < lo <= hi < 1, got {self.lesion_area_range}")
        if not (0.0 <= self.noise_image_fraction < 1.0):
            raise ValueError(f"noise_image_fraction must be in [0, 1), got {self.noise_image_fraction}")
        if self.texture_family not in TEXTURE_FAMILIES:
            raise ValueError(f"unknown texture_family {self.texture_family}; known: {sorted(TEXTURE_FAMILIES)}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ValueError(f"seed must be a non-negative int, got {self.seed!r}")

    @property
    def num_classes(self) -> int:
        return len(self.class_counts)

    @property
    def n_total(self) -> int:
        return sum(self.class_counts)

    def to_dict(self) -> dict:
        return {
            "class_counts": list(self.class_counts),
            "image_size": list(self.image_size),
            "lesion_area_range": list(self.lesion_area_range),
            "texture_family": self.texture_family,
            "noise_image_fraction": self.noise_image_fraction,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SynthSpec":
        return cls(
            class_counts=tuple(obj["class_counts"]),
            image_size=tuple(obj["image_size"]),
            lesion_area_range=tuple(obj["lesion_area_range"]),
            texture_family=obj["texture_family"],
            noise_image_fraction=obj["noise_image_fraction"],
            seed=obj["seed"],
        )


@dataclass(frozen=True)
class LesionParams:
    """Geometry and color of one lesion blob, sufficient to re-render it."""

    center: tuple[float, float]  # (cx, cy) pixels
    semi_axes: tuple[float, float]  # (a, b) pixels
    exponent: float  # superellipse exponent
    angle: float  # rotation, radians
    wobble_amps: tuple[float, ...]
    wobble_phases: tuple[float, ...]
    color_hsv: tuple[float, float, float]

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "semi_axes": list(self.semi_axes),
            "exponent": self.exponent,
            "angle": self.angle,
            "wobble_amps": list(self.wobble_amps),
            "wobble_phases": list(self.wobble_phases),
            "color_hsv": list(self.color_hsv),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "LesionParams":
        return cls(
            center=tuple(obj["center"]),
            semi_axes=tuple(obj["semi_axes"]),
            exponent=obj["exponent"],
            angle=obj["angle"],
            wobble_amps=tuple(obj["wobble_amps"]),
            wobble_phases=tuple(obj["wobble_phases"]),
            color_hsv=tuple(obj["color_hsv"]),
        )


@dataclass(frozen=True)
class SynthRecordTruth:
    """Ground truth for one generated record (the oracle side of the dataset)."""

    image_id: str
    index: int  # global record index; fixes the rng streams
    class_id: int
    image_size: tuple[int, int]  # (H, W)
    lesion: LesionParams | None  # None for noise (background-only) images
    box: BoundingBox | None

    @property
    def is_noise(self) -> bool:
        return self.lesion is None

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "index": self.index,
            "class_id": self.class_id,
            "image_size": list(self.image_size),
            "lesion": self.lesion.to_dict() if self.lesion else None,
            "box": self.box.to_dict() if self.box else None,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SynthRecordTruth":
        return cls(
            image_id=obj["image_id"],
            index=obj["index"],
            class_id=obj["class_id"],
            image_size=tuple(obj["image_size"]),
            lesion=LesionParams.from_dict(obj["lesion"]) if obj.get("lesion") else None,
            box=BoundingBox.from_dict(obj["box"]) if obj.get("box") else None,
        )


def oracle_label(truth: SynthRecordTruth) -> int:
    """The class used at generation time; ground truth for acceptance runs."""
    return truth.class_id


# ---------------------------------------------------------------------------
# parameter sampling


def class_hue_band(class_id: int, num_classes: int) -> tuple[float, float]:
    """Disjoint hue interval for a class (gaps left between neighbors)."""
    slot = _HUE_SPAN / num_classes
    lo = _HUE_LO + slot * class_id
    return lo, lo + slot * _HUE_FILL


def _superellipse_area_coeff(n: float) -> float:
    # area of |x/a|^n + |y/b|^n <= 1 is 4ab * Gamma(1+1/n)^2 / Gamma(1+2/n)
    return 4.0 * math.gamma(1.0 + 1.0 / n) ** 2 / math.gamma(1.0 + 2.0 / n)


def _sample_lesion(rng: np.random.Generator, spec: SynthSpec, class_id: int) -> LesionParams:
    H, W = spec.image_size
    area_frac = rng.uniform(*spec.lesion_area_range)
    exponent = SHAPE_EXPONENTS[class_id % len(SHAPE_EXPONENTS)]
    ab = area_frac * H * W / _superellipse_area_coeff(exponent)
    aspect = math.exp(rng.uniform(-0.45, 0.45))
    a = math.sqrt(ab * aspect)
    b = math.sqrt(ab / aspect)
    angle = rng.uniform(0.0, math.pi)
    amps = tuple(rng.uniform(0.0, 0.07, size=3).tolist())
    phases = tuple(rng.uniform(0.0, 2.0 * math.pi, size=3).tolist())

    # keep the whole wobbled blob inside the frame
    reach = math.hypot(a, b) * (1.0 + sum(amps)) + 2.0
    limit = 0.5 * min(H, W) - 1.0
    if reach > limit:
        shrink = limit / reach
        a, b, reach = a * shrink, b * shrink, limit
    cx = rng.uniform(reach, W - reach)
    cy = rng.uniform(reach, H - reach)

    lo, hi = class_hue_band(class_id, spec.num_classes)
    hue = rng.uniform(lo, hi)
    sat = rng.uniform(0.55, 0.80)
    val = rng.uniform(0.35, 0.55)
    return LesionParams(
        center=(float(cx), float(cy)),
        semi_axes=(float(a), float(b)),
        exponent=float(exponent),
        angle=float(angle),
        wobble_amps=amps,
        wobble_phases=phases,
        color_hsv=(float(hue), float(sat), float(val)),
    )


# ---------------------------------------------------------------------------
# rendering


def _radial_field(params: LesionParams, image_size: tuple[int, int]) -> np.ndarray:
    """Normalized radius rho/w(phi) at every pixel; <= 1 means inside."""
    H, W = image_size
    cx, cy = params.center
    a, b = params.semi_axes
    n = params.exponent
    ys, xs = np.mgrid[0:H, 0:W]
    dx = xs - cx
    dy = ys - cy
    cos_t, sin_t = math.cos(params.angle), math.sin(params.angle)
    u = dx * cos_t + dy * sin_t
    v = -dx * sin_t + dy * cos_t
    rho = (np.abs(u / a) ** n + np.abs(v / b) ** n) ** (1.0 / n)
    phi = np.arctan2(v, u)
    wobble = np.ones_like(rho)
    for k, (amp, phase) in enumerate(zip(params.wobble_amps, params.wobble_phases)):
        wobble += amp * np.sin((k + 2) * phi + phase)
    return rho / np.maximum(wobble, 1e-6)


def lesion_alpha(params: LesionParams, image_size: tuple[int, int]) -> np.ndarray:
    """Soft compositing weight in [0, 1] (1 deep inside, 0 outside)."""
    s = _radial_field(params, image_size)
    return np.clip((1.0 - s) / _EDGE_WIDTH + 0.5, 0.0, 1.0)


def lesion_mask(truth: SynthRecordTruth) -> np.ndarray:
    """Boolean mask of rendered lesion pixels (alpha >= 0.5)."""
    if truth.lesion is None:
        H, W = truth.image_size
        return np.zeros((H, W), dtype=bool)
    return lesion_alpha(truth.lesion, truth.image_size) >= 0.5


def mask_bbox(mask: np.ndarray, class_id: int) -> BoundingBox:
    """Tight half-open bounding box of the true pixels in a mask."""
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise ValueError("cannot box an empty mask")
    return BoundingBox(
        xmin=int(xs.min()),
        ymin=int(ys.min()),
        xmax=int(xs.max()) + 1,
        ymax=int(ys.max()) + 1,
        class_id=class_id,
    )


def _upsample_bilinear(field: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    H, W = size
    img = Image.fromarray(field.astype(np.float32), mode="F")
    return np.asarray(img.resize((W, H), Image.BILINEAR), dtype=np.float64)


def _render_background(rng: np.random.Generator, spec: SynthSpec) -> np.ndarray:
    H, W = spec.image_size
    base_rgb, grid = TEXTURE_FAMILIES[spec.texture_family]
    base = np.asarray(base_rgb) + rng.uniform(-0.04, 0.04, size=3)
    coarse = np.stack(
        [_upsample_bilinear(rng.normal(0.0, 1.0, size=(grid, grid)), (H, W)) for _ in range(3)],
        axis=-1,
    )
    grain = rng.normal(0.0, 1.0, size=(H, W, 1))
    img = base[None, None, :] + 0.045 * coarse + 0.015 * grain
    return np.clip(img, 0.0, 1.0)


def _render_discoloration(
    rng: np.random.Generator, spec: SynthSpec, truth: SynthRecordTruth, img: np.ndarray
) -> np.ndarray:
    """Diffuse wrong-class tint for noise images (a mislabeled photograph).

    A noise record models an image that slipped into the dataset with the
    wrong label, so its pixels carry color evidence for a *different* class
    than the one it is labeled with: a broad Gaussian wash whose hue is
    drawn from another class's hue band, at lesion-like saturation.  That
    is what cleaning removes from real datasets — actively conflicting
    evidence, not blank frames.  The wash scale spans bruise-like patches
    up to full-frame color casts, so no single compactness threshold
    separates washes from lesions.  There is still no lesion: a Gaussian
    falloff with no boundary, no rim shading, nothing boxable.
    """
    H, W = img.shape[:2]
    ys, xs = np.mgrid[0:H, 0:W]
    n_washes = int(rng.integers(2, 4))
    for _ in range(n_washes):
        if spec.num_classes > 1:
            offset = int(rng.integers(1, spec.num_classes))
        else:
            offset = 0
        wrong_class = (truth.class_id + offset) % spec.num_classes
        lo, hi = class_hue_band(wrong_class, spec.num_classes)
        hue = rng.uniform(lo, hi)
        sat = rng.uniform(0.55, 0.80)
        val = rng.uniform(0.35, 0.55)
        cx = rng.uniform(0.15 * W, 0.85 * W)
        cy = rng.uniform(0.15 * H, 0.85 * H)
        sigma = rng.uniform(0.10, 0.45) * min(H, W)
        strength = rng.uniform(0.60, 0.90)
        d2 = (xs - cx) ** 2 + (ys - cy) ** 2
        alpha = (strength * np.exp(-d2 / (2.0 * sigma * sigma)))[..., None]
        tint_rgb = np.asarray(colorsys.hsv_to_rgb(hue, sat, val))
        img = img * (1.0 - alpha) + tint_rgb[None, None, :] * alpha
    return img


def render_image(spec: SynthSpec, truth: SynthRecordTruth) -> np.ndarray:
    """Re-render a record's pixels from its truth entry; uint8 (H, W, 3).

    Replays the record's private rendering stream, so the result is
    pixel-identical to the file written by :func:`generate_dataset`.
    """
    rng = np.random.default_rng([spec.seed, 3, truth.index])
    img = _render_background(rng, spec)
    if truth.lesion is not None:
        params = truth.lesion
        alpha = lesion_alpha(params, truth.image_size)[..., None]
        shade = 1.0 - 0.18 * np.clip(_radial_field(params, truth.image_size), 0.0, 1.0)[..., None]
        lesion_rgb = np.asarray(colorsys.hsv_to_rgb(*params.color_hsv))
        img = img * (1.0 - alpha) + (lesion_rgb[None, None, :] * shade) * alpha
    else:
        img = _render_discoloration(rng, spec, truth, img)
    return (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


# ---------------------------------------------------------------------------
# dataset generation


def _sample_truth(spec: SynthSpec, index: int, class_id: int, is_noise: bool) -> SynthRecordTruth:
    image_id = f"s{index:05d}_c{class_id:02d}"
    if is_noise:
        return SynthRecordTruth(
            image_id=image_id,
            index=index,
            class_id=class_id,
            image_size=spec.image_size,
            lesion=None,
            box=None,
        )
    rng = np.random.default_rng([spec.seed, 1, index])
    params = _sample_lesion(rng, spec, class_id)
    truth = SynthRecordTruth(
        image_id=image_id,
        index=index,
        class_id=class_id,
        image_size=spec.image_size,
        lesion=params,
        box=None,
    )
    box = mask_bbox(lesion_mask(truth), class_id)
    return SynthRecordTruth(
        image_id=image_id,
        index=index,
        class_id=class_id,
        image_size=spec.image_size,
        lesion=params,
        box=box,
    )


def _noise_indices(spec: SynthSpec) -> frozenset[int]:
    n_noise = int(spec.noise_image_fraction * spec.n_total)  # floor
    if n_noise == 0:
        return frozenset()
    rng = np.random.default_rng([spec.seed, 2])
    return frozenset(int(i) for i in rng.choice(spec.n_total, size=n_noise, replace=False))


def plan_truths(spec: SynthSpec) -> tuple[SynthRecordTruth, ...]:
    """All truth records for a spec, class-major, without touching disk."""
    noise = _noise_indices(spec)
    truths = []
    index = 0
    for class_id, count in enumerate(spec.class_counts):
        for _ in range(count):
            truths.append(_sample_truth(spec, index, class_id, index in noise))
            index += 1
    return tuple(truths)


def generate_dataset(spec: SynthSpec, out_dir: str | Path) -> DatasetManifest:
    """Render the dataset into ``out_dir`` and return its manifest.

    Layout: ``images/<image_id>.png``, ``manifest.jsonl`` (data-module
    format) and ``truth.jsonl`` (spec header + one truth record per line).
    """
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    try:
        images_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {images_dir}: {exc}") from None

    truths = plan_truths(spec)
    records = []
    for truth in truths:
        img = render_image(spec, truth)
        Image.fromarray(img, mode="RGB").save(images_dir / f"{truth.image_id}.png")
        boxes = (truth.box,) if truth.box is not None else ()
        records.append(
            ImageRecord(
                image_id=truth.image_id,
                path=f"images/{truth.image_id}.png",
                class_id=truth.class_id,
                split="unassigned",
                boxes=boxes,
                noise_flag=truth.is_noise,
            )
        )

    class_names = tuple(f"lesion_{c:02d}" for c in range(spec.num_classes))
    manifest = DatasetManifest(records=tuple(records), class_names=class_names, root=out_dir)
    save_manifest(manifest, out_dir / "manifest.jsonl")
    save_truth(spec, truths, out_dir / "truth.jsonl")
    return manifest


def save_truth(spec: SynthSpec, truths: tuple[SynthRecordTruth, ...], path: str | Path) -> Path:
    path = Path(path)
    header = {"schema_version": TRUTH_SCHEMA_VERSION, "spec": spec.to_dict()}
    lines = [json.dumps(header, separators=(",", ":"))]
    lines.extend(json.dumps(t.to_dict(), separators=(",", ":")) for t in truths)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_truth(path: str | Path) -> tuple[SynthSpec, tuple[SynthRecordTruth, ...]]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise ManifestError(f"truth file not found: {path}") from None
    if not lines:
        raise ManifestError(f"{path}: line 1: missing truth header")
    try:
        header = json.loads(lines[0])
        spec = SynthSpec.from_dict(header["spec"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ManifestError(f"{path}: line 1: bad truth header: {exc}") from None
    truths = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            truths.append(SynthRecordTruth.from_dict(json.loads(raw)))
        except (json.JSONDecodeError, KeyError, TypeError, ManifestError) as exc:
            raise ManifestError(f"{path}: line {lineno}: bad truth record: {exc}") from None
    return spec, tuple(truths)


def truth_by_id(truths: tuple[SynthRecordTruth, ...]) -> dict[str, SynthRecordTruth]:
    return {t.image_id: t for t in truths}
