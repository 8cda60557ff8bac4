"""Compact CNN backbones behind a string-keyed registry.

The four built-in ids mirror the shapes of well-known families at desk
scale: a plain conv stack (``small-cnn``), a residual net
(``resnet50-like``), a densely connected net (``densenet121-like``) and a
depthwise-separable stack (``nas-small``).  All are small enough to
fine-tune on a CPU in seconds and end in global average pooling plus a
zero-initialized linear head, so an untrained model predicts the uniform
distribution.  GroupNorm is used instead of BatchNorm to keep single-image
inference and tiny-batch training deterministic and consistent.
"""

from __future__ import annotations

from typing import Callable

import torch
from torch import nn


def _gn(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(4, channels)


def _conv_block(c_in: int, c_out: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, kernel_size=3, stride=stride, padding=1, bias=False),
        _gn(c_out),
        nn.ReLU(inplace=True),
    )


def _zero_head(features: int, num_classes: int) -> nn.Linear:
    head = nn.Linear(features, num_classes)
    nn.init.zeros_(head.weight)
    nn.init.zeros_(head.bias)
    return head


class _GapClassifier(nn.Module):
    """Shared tail: global average pool then a linear head."""

    def __init__(self, body: nn.Module, features: int, num_classes: int):
        super().__init__()
        self.body = body
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = _zero_head(features, num_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        z = self.pool(self.body(x)).flatten(1)
        return self.head(z)


class SmallCnn(_GapClassifier):
    """Three conv/pool blocks; the desk-scale acceptance workhorse."""

    def __init__(self, num_classes: int):
        body = nn.Sequential(
            _conv_block(3, 16),
            nn.MaxPool2d(2),
            _conv_block(16, 32),
            nn.MaxPool2d(2),
            _conv_block(32, 48),
            nn.MaxPool2d(2),
        )
        super().__init__(body, 48, num_classes)


class _ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = _conv_block(channels, channels)
        self.conv2 = nn.Sequential(
            nn.Conv2d(channels, channels, kernel_size=3, padding=1, bias=False),
            _gn(channels),
        )
        self.act = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(x + self.conv2(self.conv1(x)))


class ResidualNet(_GapClassifier):
    """Stem + three strided residual stages (a 'resnet50' silhouette)."""

    def __init__(self, num_classes: int):
        widths = (16, 24, 32)
        layers: list[nn.Module] = [_conv_block(3, widths[0])]
        for c_in, c_out in zip(widths, widths[1:] + widths[-1:]):
            layers.append(_ResidualBlock(c_in))
            layers.append(_conv_block(c_in, c_out, stride=2))
        super().__init__(nn.Sequential(*layers), widths[-1], num_classes)


class _DenseBlock(nn.Module):
    def __init__(self, c_in: int, growth: int, n_layers: int):
        super().__init__()
        self.layers = nn.ModuleList(
            _conv_block(c_in + i * growth, growth) for i in range(n_layers)
        )
        self.out_channels = c_in + n_layers * growth

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers:
            x = torch.cat([x, layer(x)], dim=1)
        return x


class DenseNetMini(_GapClassifier):
    """Two dense blocks with transitions (a 'densenet121' silhouette)."""

    def __init__(self, num_classes: int):
        stem_c, growth = 16, 8
        block1 = _DenseBlock(stem_c, growth, 3)
        trans_c = block1.out_channels // 2 // 4 * 4  # keep GroupNorm-divisible
        block2 = _DenseBlock(trans_c, growth, 3)
        body = nn.Sequential(
            _conv_block(3, stem_c),
            nn.MaxPool2d(2),
            block1,
            nn.Sequential(
                nn.Conv2d(block1.out_channels, trans_c, kernel_size=1, bias=False),
                _gn(trans_c),
                nn.ReLU(inplace=True),
                nn.AvgPool2d(2),
            ),
            block2,
        )
        super().__init__(body, block2.out_channels, num_classes)


class SepConvNet(_GapClassifier):
    """Depthwise-separable conv stack (a mobile/NAS-style cell silhouette)."""

    def __init__(self, num_classes: int):
        widths = (16, 32, 48)
        layers: list[nn.Module] = [_conv_block(3, widths[0], stride=2)]
        for c_in, c_out in zip(widths, widths[1:]):
            layers.append(
                nn.Sequential(
                    nn.Conv2d(c_in, c_in, kernel_size=3, stride=2, padding=1,
                              groups=c_in, bias=False),
                    _gn(c_in),
                    nn.ReLU(inplace=True),
                    nn.Conv2d(c_in, c_out, kernel_size=1, bias=False),
                    _gn(c_out),
                    nn.ReLU(inplace=True),
                )
            )
        super().__init__(nn.Sequential(*layers), widths[-1], num_classes)


# ---------------------------------------------------------------------------
# registry

_REGISTRY: dict[str, Callable[[int], nn.Module]] = {}


def register_backbone(
    backbone_id: str, factory: Callable[[int], nn.Module], overwrite: bool = False
) -> None:
    """Register a ``factory(num_classes) -> nn.Module`` under an id."""
    if not backbone_id:
        raise ValueError("backbone_id must be non-empty")
    if backbone_id in _REGISTRY and not overwrite:
        raise ValueError(f"backbone {backbone_id!r} is already registered")
    _REGISTRY[backbone_id] = factory


def create_backbone(backbone_id: str, num_classes: int) -> nn.Module:
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    try:
        factory = _REGISTRY[backbone_id]
    except KeyError:
        raise ValueError(
            f"unregistered backbone {backbone_id!r}; known: {sorted(_REGISTRY)}"
        ) from None
    return factory(num_classes)


def list_backbones() -> list[str]:
    return sorted(_REGISTRY)


register_backbone("small-cnn", SmallCnn)
register_backbone("resnet50-like", ResidualNet)
register_backbone("densenet121-like", DenseNetMini)
register_backbone("nas-small", SepConvNet)
