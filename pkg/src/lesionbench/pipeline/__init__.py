"""Preprocessing, losses, LR schedule, backbones and the training harness."""

from .backbones import create_backbone, list_backbones, register_backbone
from .batches import PredictionBatch, load_predictions, save_predictions
from .losses import (
    cross_entropy,
    focal_loss,
    loss_grad_on_scores,
    loss_on_scores,
    softmax,
)
from .schedule import lr_at_epoch
from .training import (
    EpochStats,
    TrainedModel,
    TrainingConfig,
    fine_tune,
    load_model,
    predict_image,
    predict_proba,
    save_model,
)
from .transforms import (
    EvalTransform,
    TrainTransform,
    TransformConfig,
    build_transform,
    default_transform_config,
    load_image,
)

__all__ = [
    "EpochStats",
    "EvalTransform",
    "PredictionBatch",
    "TrainTransform",
    "TrainedModel",
    "TrainingConfig",
    "TransformConfig",
    "build_transform",
    "create_backbone",
    "cross_entropy",
    "default_transform_config",
    "fine_tune",
    "focal_loss",
    "list_backbones",
    "load_image",
    "load_model",
    "load_predictions",
    "loss_grad_on_scores",
    "loss_on_scores",
    "lr_at_epoch",
    "predict_image",
    "predict_proba",
    "register_backbone",
    "save_model",
    "save_predictions",
    "softmax",
]
