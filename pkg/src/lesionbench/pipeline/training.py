"""Fine-tuning and prediction over manifests.

The loop is plain mini-batch SGD with the step-decay schedule and either
cross-entropy or focal loss on the softmax output.  Determinism: weights
are initialized under `torch.manual_seed(cfg.seed)`, epoch shuffles come
from `rng([seed, 4, epoch])`, and each sample's augmentation is keyed by
`epoch * n + position`, so a given record sees the same augmented pixels
regardless of shuffle or loader order.

Datasets are loaded into memory up front — these are desk-scale runs
(hundreds to a few thousand small images), not ImageNet jobs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch.nn import functional as F

from ..data import DatasetManifest
from .backbones import create_backbone
from .batches import PredictionBatch
from .schedule import lr_at_epoch
from .transforms import (
    TransformConfig,
    build_transform,
    default_transform_config,
    load_image,
)

_LOSS_KINDS = ("cross_entropy", "focal")


@dataclass(frozen=True)
class TrainingConfig:
    """Optimizer recipe: SGD with step-decay LR and a fixed epoch budget."""

    initial_lr: float = 0.01
    decay_factor: float = 0.1
    decay_period_epochs: int = 10
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 30
    input_size: tuple[int, int] = (224, 224)
    loss: str = "cross_entropy"
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    seed: int = 0
    eval_split: str | None = None  # evaluate top-1 on this split each epoch
    early_stop_patience: int | None = None  # epochs without eval improvement

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_size", tuple(int(s) for s in self.input_size))
        if self.initial_lr <= 0:
            raise ValueError(f"initial_lr must be > 0, got {self.initial_lr}")
        if not (0 < self.decay_factor <= 1):
            raise ValueError(f"decay_factor must be in (0, 1], got {self.decay_factor}")
        if self.decay_period_epochs < 1:
            raise ValueError(f"decay_period_epochs must be >= 1, got {self.decay_period_epochs}")
        if not (0 <= self.momentum < 1):
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if len(self.input_size) != 2 or any(s < 1 for s in self.input_size):
            raise ValueError(f"input_size must be positive (H, W), got {self.input_size}")
        if self.loss not in _LOSS_KINDS:
            raise ValueError(f"loss must be one of {_LOSS_KINDS}, got {self.loss!r}")
        if self.focal_alpha <= 0:
            raise ValueError(f"focal_alpha must be > 0, got {self.focal_alpha}")
        if self.focal_gamma < 0:
            raise ValueError(f"focal_gamma must be >= 0, got {self.focal_gamma}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ValueError(f"seed must be a non-negative int, got {self.seed!r}")
        if self.eval_split not in (None, "train", "test"):
            raise ValueError(f"eval_split must be None, 'train' or 'test', got {self.eval_split!r}")
        if self.early_stop_patience is not None:
            if self.early_stop_patience < 1:
                raise ValueError(f"early_stop_patience must be >= 1, got {self.early_stop_patience}")
            if self.eval_split is None:
                raise ValueError("early_stop_patience requires an eval_split")

    def to_dict(self) -> dict:
        return {
            "initial_lr": self.initial_lr,
            "decay_factor": self.decay_factor,
            "decay_period_epochs": self.decay_period_epochs,
            "momentum": self.momentum,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "input_size": list(self.input_size),
            "loss": self.loss,
            "focal_alpha": self.focal_alpha,
            "focal_gamma": self.focal_gamma,
            "seed": self.seed,
            "eval_split": self.eval_split,
            "early_stop_patience": self.early_stop_patience,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainingConfig":
        known = dict(obj)
        if "input_size" in known:
            known["input_size"] = tuple(known["input_size"])
        return cls(**known)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    lr: float
    mean_loss: float
    eval_accuracy: float | None = None

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "lr": self.lr,
            "mean_loss": self.mean_loss,
            "eval_accuracy": self.eval_accuracy,
        }


@dataclass
class TrainedModel:
    """A fitted classifier plus everything needed to reuse or persist it."""

    backbone_id: str
    model_id: str
    num_classes: int
    class_names: tuple[str, ...]
    module: torch.nn.Module
    config: TrainingConfig
    transform: TransformConfig
    history: list[EpochStats] = field(default_factory=list)


def _torch_loss(logits: torch.Tensor, labels: torch.Tensor, cfg: TrainingConfig) -> torch.Tensor:
    log_probs = F.log_softmax(logits, dim=1)
    log_pt = log_probs.gather(1, labels.view(-1, 1)).squeeze(1)
    if cfg.loss == "cross_entropy":
        return -log_pt.mean()
    p_t = log_pt.exp()
    return (-cfg.focal_alpha * (1.0 - p_t) ** cfg.focal_gamma * log_pt).mean()


def _load_split_arrays(manifest: DatasetManifest, split: str):
    records = manifest.subset(split).records
    if not records:
        raise ValueError(f"manifest has no records in split {split!r}")
    images = [load_image(manifest.resolve_path(rec)) for rec in records]
    labels = np.array([rec.class_id for rec in records], dtype=np.int64)
    ids = tuple(rec.image_id for rec in records)
    return images, labels, ids


def fine_tune(
    backbone_id: str,
    manifest: DatasetManifest,
    cfg: TrainingConfig,
    transform_cfg: TransformConfig | None = None,
    model_id: str | None = None,
) -> TrainedModel:
    """Mini-batch SGD over the manifest's train split."""
    if manifest.num_classes < 2:
        raise ValueError(f"need >= 2 classes to train, got {manifest.num_classes}")
    images, labels, _ = _load_split_arrays(manifest, "train")
    n = len(images)
    if transform_cfg is None:
        transform_cfg = default_transform_config(cfg.input_size)

    torch.manual_seed(cfg.seed)
    module = create_backbone(backbone_id, manifest.num_classes)
    model = TrainedModel(
        backbone_id=backbone_id,
        model_id=model_id or backbone_id,
        num_classes=manifest.num_classes,
        class_names=manifest.class_names,
        module=module,
        config=cfg,
        transform=transform_cfg,
        history=[],
    )
    optimizer = torch.optim.SGD(module.parameters(), lr=cfg.initial_lr, momentum=cfg.momentum)
    train_tf = build_transform(transform_cfg, "train", seed=cfg.seed)

    best_eval = -1.0
    stale = 0
    for epoch in range(cfg.epochs):
        lr = lr_at_epoch(cfg, epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        order = np.random.default_rng([cfg.seed, 4, epoch]).permutation(n)
        module.train()
        total_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xs = np.stack([train_tf(images[i], index=epoch * n + int(i)) for i in idx])
            x = torch.from_numpy(xs)
            y = torch.from_numpy(labels[idx])
            optimizer.zero_grad()
            loss = _torch_loss(module(x), y, cfg)
            loss.backward()
            optimizer.step()
            total_loss += float(loss.detach()) * len(idx)
        mean_loss = total_loss / n

        eval_acc = None
        if cfg.eval_split is not None:
            batch = predict_proba(model, manifest, split=cfg.eval_split)
            eval_labels = manifest.subset(cfg.eval_split).labels()
            top1 = batch.probs.argmax(axis=1)
            eval_acc = float((top1 == eval_labels).mean())
        model.history.append(EpochStats(epoch=epoch, lr=lr, mean_loss=mean_loss, eval_accuracy=eval_acc))

        if cfg.early_stop_patience is not None:
            if eval_acc is not None and eval_acc > best_eval:
                best_eval, stale = eval_acc, 0
            else:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    break

    module.eval()
    return model


def predict_proba(model: TrainedModel, manifest: DatasetManifest, split: str = "test") -> PredictionBatch:
    """One probability row per record of the split, in manifest order."""
    if manifest.num_classes != model.num_classes:
        raise ValueError(
            f"manifest has {manifest.num_classes} classes but model expects {model.num_classes}"
        )
    images, _, ids = _load_split_arrays(manifest, split)
    eval_tf = build_transform(model.transform, "eval")
    module = model.module
    was_training = module.training
    module.eval()
    rows = []
    with torch.no_grad():
        bs = model.config.batch_size
        for start in range(0, len(images), bs):
            xs = np.stack([eval_tf(img) for img in images[start : start + bs]])
            logits = module(torch.from_numpy(xs))
            rows.append(F.softmax(logits.double(), dim=1).numpy())
    if was_training:
        module.train()
    return PredictionBatch(sample_ids=ids, probs=np.concatenate(rows, axis=0), model_id=model.model_id)


def predict_image(model: TrainedModel, image) -> np.ndarray:
    """Probability vector for a single in-memory image."""
    eval_tf = build_transform(model.transform, "eval")
    x = torch.from_numpy(eval_tf(image)[None])
    model.module.eval()
    with torch.no_grad():
        return F.softmax(model.module(x).double(), dim=1).numpy()[0]


# ---------------------------------------------------------------------------
# persistence

_WEIGHTS_FILE = "weights.pt"
_METADATA_FILE = "metadata.json"


def save_model(model: TrainedModel, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.save(model.module.state_dict(), out_dir / _WEIGHTS_FILE)
    metadata = {
        "backbone_id": model.backbone_id,
        "model_id": model.model_id,
        "num_classes": model.num_classes,
        "class_names": list(model.class_names),
        "config": model.config.to_dict(),
        "transform": model.transform.to_dict(),
        "history": [h.to_dict() for h in model.history],
    }
    (out_dir / _METADATA_FILE).write_text(json.dumps(metadata, indent=2) + "\n", encoding="utf-8")
    return out_dir


def load_model(model_dir: str | Path) -> TrainedModel:
    model_dir = Path(model_dir)
    meta_path = model_dir / _METADATA_FILE
    if not meta_path.exists():
        raise ValueError(f"not a model directory (missing {_METADATA_FILE}): {model_dir}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    module = create_backbone(meta["backbone_id"], meta["num_classes"])
    state = torch.load(model_dir / _WEIGHTS_FILE, map_location="cpu", weights_only=True)
    module.load_state_dict(state)
    module.eval()
    history = [
        EpochStats(
            epoch=h["epoch"],
            lr=h["lr"],
            mean_loss=h["mean_loss"],
            eval_accuracy=h.get("eval_accuracy"),
        )
        for h in meta["history"]
    ]
    return TrainedModel(
        backbone_id=meta["backbone_id"],
        model_id=meta["model_id"],
        num_classes=meta["num_classes"],
        class_names=tuple(meta["class_names"]),
        module=module,
        config=TrainingConfig.from_dict(meta["config"]),
        transform=TransformConfig.from_dict(meta["transform"]),
        history=history,
    )
