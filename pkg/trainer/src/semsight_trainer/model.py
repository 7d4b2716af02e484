"""Encoder-decoder network with pyramid pooling for semantic foresight.

14 input channels (position, trajectory, obstacles, explored, 10
observed semantic channels) to 10 per-class probability logits at full
resolution. Width and depth are knobs so desk-scale corpora train in
minutes on CPU; the full-size recipe (deep residual encoder, 256 crops,
60k iterations) is a documented preset, not a default.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

IN_CHANNELS = 14   # frozen by the SSP1 wire layout
OUT_CHANNELS = 10


@dataclass
class ModelConfig:
    width: int = 32
    depth: int = 3
    pool_sizes: tuple[int, ...] = (1, 2, 4)
    lambda_global: float = 1.0
    lambda_area: float = 1.0
    mask_mode: str = "unexplored"  # or "explored" for the copy-prone baseline
    # optimizer schedule
    lr: float = 5e-4
    lr_min: float = 1e-5
    poly_power: float = 0.9
    iterations: int = 1500
    batch_size: int = 16
    train_frames: int = 10  # first-k exploration frames used for training
    seed: int = 0
    # augmentation toggles; all spatial transforms apply jointly to every layer
    augment_rotate: bool = False   # uniform angle in [-180, 180], nearest resample
    augment_hflip: bool = False
    crop: int | None = None        # e.g. 256 for the full-size recipe
    eval_every: int = 250

    def __post_init__(self):
        if self.mask_mode not in ("unexplored", "explored"):
            raise ValueError(f"mask_mode must be unexplored|explored, got {self.mask_mode!r}")
        if self.depth < 1 or self.width < 4:
            raise ValueError("depth must be >= 1 and width >= 4")


def poly_lr(cfg: ModelConfig, iteration: int) -> float:
    frac = min(iteration / max(cfg.iterations, 1), 1.0)
    return max(cfg.lr * (1.0 - frac) ** cfg.poly_power, cfg.lr_min)


class _ConvBlock(nn.Sequential):
    def __init__(self, cin, cout, stride=1):
        super().__init__(
            nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False),
            nn.BatchNorm2d(cout),
            nn.ReLU(inplace=True),
        )


class PyramidPooling(nn.Module):
    """Multi-scale context: pooled features re-projected and concatenated."""

    def __init__(self, channels: int, pool_sizes: tuple[int, ...]):
        super().__init__()
        branch_channels = max(channels // len(pool_sizes), 8)
        # GroupNorm: the 1x1-pooled branch has a single spatial value, which
        # BatchNorm cannot normalize for batch size 1
        self.branches = nn.ModuleList(
            nn.Sequential(
                nn.AdaptiveAvgPool2d(size),
                nn.Conv2d(channels, branch_channels, 1, bias=False),
                nn.GroupNorm(1, branch_channels),
                nn.ReLU(inplace=True),
            )
            for size in pool_sizes
        )
        self.out_channels = channels + branch_channels * len(pool_sizes)

    def forward(self, x):
        h, w = x.shape[2:]
        pieces = [x]
        for branch in self.branches:
            pooled = branch(x)
            pieces.append(F.interpolate(pooled, size=(h, w), mode="bilinear",
                                        align_corners=False))
        return torch.cat(pieces, dim=1)


class ForesightNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        stages = []
        cin = IN_CHANNELS
        cout = cfg.width
        for stage in range(cfg.depth):
            stride = 1 if stage == 0 else 2
            stages.append(nn.Sequential(
                _ConvBlock(cin, cout, stride=stride),
                _ConvBlock(cout, cout),
            ))
            cin = cout
            cout = min(cout * 2, cfg.width * 4)
        self.encoder = nn.ModuleList(stages)
        self.pyramid = PyramidPooling(cin, cfg.pool_sizes)
        self.fuse = _ConvBlock(self.pyramid.out_channels, cfg.width * 2)
        self.head = nn.Conv2d(cfg.width * 2, OUT_CHANNELS, 1)

    def forward(self, x):
        h, w = x.shape[2:]
        # pad so every stride-2 stage divides evenly, crop back at the end
        factor = 2 ** (self.cfg.depth - 1)
        pad_h = (-h) % factor
        pad_w = (-w) % factor
        if pad_h or pad_w:
            x = F.pad(x, (0, pad_w, 0, pad_h))
        for stage in self.encoder:
            x = stage(x)
        x = self.fuse(self.pyramid(x))
        logits = self.head(x)
        logits = F.interpolate(logits, size=(h + pad_h, w + pad_w), mode="bilinear",
                               align_corners=False)
        return logits[:, :, :h, :w]


def save_checkpoint(path, model: ForesightNet, cfg: ModelConfig,
                    weights, curve) -> None:
    torch.save(
        {
            "state_dict": model.state_dict(),
            "config": cfg.__dict__,
            "class_weights": list(map(float, weights)),
            "curve": curve,
        },
        path,
    )


def load_checkpoint(path) -> tuple[ForesightNet, ModelConfig, list]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    cfg_dict = dict(payload["config"])
    cfg_dict["pool_sizes"] = tuple(cfg_dict.get("pool_sizes", (1, 2, 4)))
    cfg = ModelConfig(**cfg_dict)
    model = ForesightNet(cfg)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, cfg, payload.get("curve", [])
