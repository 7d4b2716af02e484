"""Mask-constrained multi-task loss, numerically matching the reference.

Weighted per-channel binary cross-entropy averaged over valid cells
(N = valid-cell count, not cells x channels), logits clamped to +/-30
before the sigmoid. Supervision runs on unexplored cells only; the
``explored`` mask mode inverts that to reproduce the copy-prone
baseline, supervising the observed semantics instead.
"""

from __future__ import annotations

from typing import NamedTuple

import torch

LOGIT_CLAMP = 30.0


def masked_weighted_bce(
    logits: torch.Tensor,
    targets: torch.Tensor,
    weights: torch.Tensor,
    valid: torch.Tensor,
) -> torch.Tensor:
    """(B, C, H, W) logits/targets, (C,) weights, (B, H, W) bool valid mask."""
    if logits.shape != targets.shape:
        raise ValueError(f"logits {tuple(logits.shape)} != targets {tuple(targets.shape)}")
    n = valid.sum()
    if int(n) == 0:
        raise ValueError("valid mask selects no cells")
    x = logits.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
    log_sig = torch.nn.functional.logsigmoid(x)
    log_one_minus = torch.nn.functional.logsigmoid(-x)
    per_cell = targets * log_sig + (1.0 - targets) * log_one_minus
    weighted = per_cell * weights.view(1, -1, 1, 1)
    masked = weighted * valid.unsqueeze(1)
    return -masked.sum() / n


class MultitaskLoss(NamedTuple):
    total: torch.Tensor
    global_term: torch.Tensor
    area_term: torch.Tensor


def multitask_loss(
    global_logits: torch.Tensor,   # (B, 10, H, W)
    gt_onehot: torch.Tensor,       # (B, 10, H, W)
    explored: torch.Tensor,        # (B, H, W) bool
    query: torch.Tensor,           # (B,) long
    weights: torch.Tensor,         # (10,)
    lambda_global: float = 1.0,
    lambda_area: float = 1.0,
    mask_mode: str = "unexplored",
) -> MultitaskLoss:
    """Shared-head variant: the area term supervises the query's channel.

    With ``mask_mode="unexplored"`` the target is the ground truth zeroed
    on explored cells and the loss runs only there; with ``"explored"``
    it is the observed semantics on explored cells.
    """
    if mask_mode == "unexplored":
        valid = ~explored
    elif mask_mode == "explored":
        valid = explored
    else:
        raise ValueError(f"unknown mask_mode {mask_mode!r}")
    masked_target = gt_onehot * valid.unsqueeze(1)

    global_term = masked_weighted_bce(global_logits, masked_target, weights, valid)

    batch = torch.arange(global_logits.shape[0], device=global_logits.device)
    area_logits = global_logits[batch, query]          # (B, H, W)
    area_target = masked_target[batch, query]
    area_weights = weights[query]                      # (B,)
    x = area_logits.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
    per_cell = (
        area_target * torch.nn.functional.logsigmoid(x)
        + (1.0 - area_target) * torch.nn.functional.logsigmoid(-x)
    )
    masked = per_cell * valid
    n = valid.sum()
    area_term = -(masked * area_weights.view(-1, 1, 1)).sum() / n

    total = lambda_global * global_term + lambda_area * area_term
    return MultitaskLoss(total, global_term, area_term)
