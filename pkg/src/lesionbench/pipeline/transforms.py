"""Image preprocessing for training and evaluation.

Train mode: pre-resize -> random crop to target -> horizontal/vertical flip
-> rotation -> normalize.  Eval mode: resize to target -> normalize; fully
deterministic.  Train-time randomness is a pure function of (seed, sample
index): the generator for one call is `default_rng([seed, index])`, so any
loader order or parallelism reproduces the same augmented pixels.

Outputs are float32 CHW arrays, normalized per channel.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class TransformConfig:
    target_size: tuple[int, int] = (224, 224)  # (H, W)
    pre_resize: tuple[int, int] = (256, 256)  # train-mode resize before the crop
    hflip_prob: float = 0.5
    vflip_prob: float = 0.5
    rotation_degrees: float = 30.0  # uniform in [-deg, +deg]
    mean: tuple[float, float, float] = IMAGENET_MEAN
    std: tuple[float, float, float] = IMAGENET_STD

    def __post_init__(self) -> None:
        object.__setattr__(self, "target_size", tuple(int(s) for s in self.target_size))
        object.__setattr__(self, "pre_resize", tuple(int(s) for s in self.pre_resize))
        object.__setattr__(self, "mean", tuple(float(m) for m in self.mean))
        object.__setattr__(self, "std", tuple(float(s) for s in self.std))
        if len(self.target_size) != 2 or any(s < 1 for s in self.target_size):
            raise ValueError(f"target_size must be positive (H, W), got {self.target_size}")
        if len(self.pre_resize) != 2 or any(
            p < t for p, t in zip(self.pre_resize, self.target_size)
        ):
            raise ValueError(
                f"pre_resize {self.pre_resize} must be >= target_size {self.target_size}"
            )
        for name in ("hflip_prob", "vflip_prob"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.rotation_degrees < 0:
            raise ValueError(f"rotation_degrees must be >= 0, got {self.rotation_degrees}")
        if len(self.mean) != 3 or len(self.std) != 3 or any(s <= 0 for s in self.std):
            raise ValueError("mean/std must be 3-vectors with positive std")

    def to_dict(self) -> dict:
        return {
            "target_size": list(self.target_size),
            "pre_resize": list(self.pre_resize),
            "hflip_prob": self.hflip_prob,
            "vflip_prob": self.vflip_prob,
            "rotation_degrees": self.rotation_degrees,
            "mean": list(self.mean),
            "std": list(self.std),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TransformConfig":
        return cls(
            target_size=tuple(obj["target_size"]),
            pre_resize=tuple(obj["pre_resize"]),
            hflip_prob=obj["hflip_prob"],
            vflip_prob=obj["vflip_prob"],
            rotation_degrees=obj["rotation_degrees"],
            mean=tuple(obj["mean"]),
            std=tuple(obj["std"]),
        )


def default_transform_config(target_size: tuple[int, int]) -> TransformConfig:
    """Config for an arbitrary target size, pre-resize scaled like 256:224."""
    h, w = int(target_size[0]), int(target_size[1])
    return TransformConfig(
        target_size=(h, w),
        pre_resize=(max(h + 1, round(h * 8 / 7)), max(w + 1, round(w * 8 / 7))),
    )


def load_image(path: str | Path) -> np.ndarray:
    """Read an image file as an RGB uint8 (H, W, 3) array."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def _to_pil(image) -> Image.Image:
    if isinstance(image, Image.Image):
        pil = image.convert("RGB")
    else:
        arr = np.asarray(image)
        if arr.ndim == 2:
            arr = np.stack([arr] * 3, axis=-1)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) or (H, W) image array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            arr = np.clip(arr, 0, 255).astype(np.uint8)
        pil = Image.fromarray(arr, mode="RGB")
    if pil.width < 1 or pil.height < 1:
        raise ValueError(f"image smaller than 1x1: {pil.size}")
    return pil


class EvalTransform:
    """Deterministic resize-to-target + per-channel normalization."""

    def __init__(self, cfg: TransformConfig):
        self.cfg = cfg

    def __call__(self, image, index: int = 0) -> np.ndarray:
        pil = _to_pil(image)
        h, w = self.cfg.target_size
        pil = pil.resize((w, h), Image.BILINEAR)
        return self._normalize(pil)

    def _normalize(self, pil: Image.Image) -> np.ndarray:
        arr = np.asarray(pil, dtype=np.float32) / 255.0
        mean = np.asarray(self.cfg.mean, dtype=np.float32)
        std = np.asarray(self.cfg.std, dtype=np.float32)
        return ((arr - mean) / std).transpose(2, 0, 1)


class TrainTransform(EvalTransform):
    """Augmenting transform; randomness keyed by (seed, sample index)."""

    def __init__(self, cfg: TransformConfig, seed: int = 0):
        super().__init__(cfg)
        if seed < 0:
            raise ValueError(f"seed must be >= 0, got {seed}")
        self.seed = seed
        # rotation fill: the normalization mean as a uint8 color, so padded
        # corners normalize to roughly zero
        self._fill = tuple(int(round(m * 255)) for m in cfg.mean)

    def __call__(self, image, index: int = 0) -> np.ndarray:
        cfg = self.cfg
        rng = np.random.default_rng([self.seed, int(index)])
        pil = _to_pil(image)
        ph, pw = cfg.pre_resize
        th, tw = cfg.target_size
        pil = pil.resize((pw, ph), Image.BILINEAR)
        # fixed draw layout: crop y, crop x, hflip, vflip, angle
        y0 = int(rng.integers(0, ph - th + 1))
        x0 = int(rng.integers(0, pw - tw + 1))
        u_h, u_v = rng.random(), rng.random()
        angle = float(rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees))
        pil = pil.crop((x0, y0, x0 + tw, y0 + th))
        if u_h < cfg.hflip_prob:
            pil = pil.transpose(Image.FLIP_LEFT_RIGHT)
        if u_v < cfg.vflip_prob:
            pil = pil.transpose(Image.FLIP_TOP_BOTTOM)
        if cfg.rotation_degrees > 0:
            pil = pil.rotate(angle, resample=Image.BILINEAR, fillcolor=self._fill)
        return self._normalize(pil)


def build_transform(cfg: TransformConfig, mode: str, seed: int = 0):
    """Factory for the two preprocessing paths."""
    if mode == "eval":
        return EvalTransform(cfg)
    if mode == "train":
        return TrainTransform(cfg, seed=seed)
    raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
