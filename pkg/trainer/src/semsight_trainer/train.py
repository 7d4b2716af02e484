"""Training loop: Adam with polynomial decay over mask-constrained batches."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from semsight_trainer import ssds
from semsight_trainer.losses import multitask_loss
from semsight_trainer.model import ForesightNet, ModelConfig, poly_lr, save_checkpoint


def load_corpus(
    dataset_path,
    cfg: ModelConfig,
    split_manifest: Optional[str] = None,
    split: str = "train",
) -> list[ssds.Record]:
    """Records from the requested split, restricted to early frames."""
    records = ssds.read_ssds(dataset_path)
    if split_manifest is not None:
        keep = set(ssds.read_split_manifest(split_manifest)[split])
        records = [r for r in records if r.plan_id in keep]
    records = [r for r in records if r.step < cfg.train_frames]
    if not records:
        raise ValueError("no records selected for training")
    shapes = {r.shape for r in records}
    if len(shapes) != 1:
        raise ValueError(f"mixed grid shapes in corpus: {sorted(shapes)}")
    return records


def batch_tensors(records: Sequence[ssds.Record], indices) -> dict[str, torch.Tensor]:
    inputs = np.stack([records[i].input_layers() for i in indices])
    gt = np.stack([records[i].gt_onehot() for i in indices])
    explored = np.stack([records[i].explored for i in indices])
    query = np.array([records[i].query for i in indices], dtype=np.int64)
    return {
        "inputs": torch.from_numpy(inputs),
        "gt_onehot": torch.from_numpy(gt),
        "explored": torch.from_numpy(explored),
        "query": torch.from_numpy(query),
    }


def train(
    dataset_path,
    cfg: ModelConfig,
    out_path,
    split_manifest: Optional[str] = None,
    split: str = "train",
    curve_path=None,
) -> list[tuple[int, float]]:
    """Train a model and save its checkpoint; returns the loss curve."""
    records = load_corpus(dataset_path, cfg, split_manifest, split)
    weights = ssds.class_weights(ssds.class_census(records))
    weights_t = torch.tensor(weights, dtype=torch.float32)

    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    model = ForesightNet(cfg)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    curve: list[tuple[int, float]] = []
    for iteration in range(cfg.iterations):
        lr = poly_lr(cfg, iteration)
        for group in optimizer.param_groups:
            group["lr"] = lr
        indices = rng.integers(0, len(records), size=cfg.batch_size)
        batch = batch_tensors(records, indices)
        batch = _augment(batch, cfg, rng)
        logits = model(batch["inputs"])
        loss = multitask_loss(
            logits,
            batch["gt_onehot"],
            batch["explored"].bool(),
            batch["query"],
            weights_t,
            lambda_global=cfg.lambda_global,
            lambda_area=cfg.lambda_area,
            mask_mode=cfg.mask_mode,
        )
        if torch.isnan(loss.total):
            raise RuntimeError(f"training diverged: NaN loss at batch {iteration}")
        optimizer.zero_grad()
        loss.total.backward()
        optimizer.step()
        if iteration % cfg.eval_every == 0 or iteration == cfg.iterations - 1:
            curve.append((iteration, float(loss.total.detach())))

    model.eval()
    save_checkpoint(out_path, model, cfg, weights, curve)
    if curve_path is not None:
        lines = [f"{it}\t{value:.6f}" for it, value in curve]
        Path(curve_path).write_text("\n".join(lines) + "\n", encoding="ascii")
    return curve


def train_observed_only(
    dataset_path,
    cfg: ModelConfig,
    out_path,
    split_manifest: Optional[str] = None,
    split: str = "train",
    curve_path=None,
) -> list[tuple[int, float]]:
    """Baseline variant: supervision on explored pixels only.

    Exists to reproduce the copy-prone comparison; checkpoints are
    interchangeable with the standard ones.
    """
    cfg_dict = dict(cfg.__dict__)
    cfg_dict["mask_mode"] = "explored"
    return train(dataset_path, ModelConfig(**cfg_dict), out_path,
                 split_manifest, split, curve_path)


def _augment(batch, cfg: ModelConfig, rng) -> dict:
    """Joint spatial transforms over all input and supervision layers."""
    if not (cfg.augment_hflip or cfg.augment_rotate or cfg.crop):
        return batch
    inputs, gt = batch["inputs"], batch["gt_onehot"]
    explored = batch["explored"].float().unsqueeze(1)
    stacked = torch.cat([inputs, gt, explored], dim=1)

    if cfg.augment_hflip and rng.random() < 0.5:
        stacked = torch.flip(stacked, dims=(3,))
    if cfg.augment_rotate:
        angle = float(rng.uniform(-180.0, 180.0))
        theta = torch.tensor(
            [[np.cos(np.radians(angle)), -np.sin(np.radians(angle)), 0.0],
             [np.sin(np.radians(angle)), np.cos(np.radians(angle)), 0.0]],
            dtype=stacked.dtype,
        ).expand(stacked.shape[0], 2, 3)
        grid = torch.nn.functional.affine_grid(theta, stacked.shape, align_corners=False)
        stacked = torch.nn.functional.grid_sample(
            stacked, grid, mode="nearest", padding_mode="zeros", align_corners=False
        )
    if cfg.crop:
        h, w = stacked.shape[2:]
        pad_h, pad_w = max(cfg.crop - h, 0), max(cfg.crop - w, 0)
        if pad_h or pad_w:
            stacked = torch.nn.functional.pad(stacked, (0, pad_w, 0, pad_h))
            h, w = stacked.shape[2:]
        r0 = int(rng.integers(0, h - cfg.crop + 1))
        c0 = int(rng.integers(0, w - cfg.crop + 1))
        stacked = stacked[:, :, r0:r0 + cfg.crop, c0:c0 + cfg.crop]

    n_in = batch["inputs"].shape[1]
    n_gt = batch["gt_onehot"].shape[1]
    return {
        "inputs": stacked[:, :n_in],
        "gt_onehot": stacked[:, n_in:n_in + n_gt],
        "explored": stacked[:, -1] > 0.5,
        "query": batch["query"],
    }
