"""Composite training loss: raster L1 + key/value cross entropy + multipath.

L_total = w_rec * L_rec + w_ce * L_CE + sum_i w_traj[i] * L_traj_i, where
L_CE averages key-token and value-token cross entropies separately over
their populations and sums the two means. Cross entropy for a slot is taken
over the slot's valid-token support only (equivalent to -inf off-mask
logits, and much cheaper than projecting to the full vocabulary); a slot
whose loss mask is zero contributes exactly zero regardless of its target.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from ..synthworld.types import AGENT_CLASSES, LIGHT_STATES
from ..model import WorldModel
from ..model.decoder import (ROLE_ATTR, ROLE_KEY_CLASS, ROLE_KEY_ID,
                             ROLE_LIGHT_STATE, Slot)

NEG_INF = -1e30


@dataclass
class LossWeights:
    rec: float = 1.0
    ce: float = 1.0
    traj: tuple[float, ...] = (0.25, 0.25, 0.5, 0.5)
    alpha: float = 1.0     # multipath classification coefficient
    beta: float = 1.0      # multipath minADE coefficient

    def __post_init__(self):
        if self.rec < 0 or self.ce < 0 or any(w < 0 for w in self.traj):
            raise ValueError("loss weights must be nonnegative")


@dataclass
class BatchOutputs:
    """Everything compute_losses needs from the model on one batch.

    Either the GRU hidden outputs (fast path) or full-vocabulary logits
    (oracle path used by tests) may be supplied per plan.
    """
    tracked_hidden: torch.Tensor | None = None     # (N, S_t, H_gru)
    gen_hidden: torch.Tensor | None = None
    light_hidden: torch.Tensor | None = None
    tracked_logits: torch.Tensor | None = None     # (N, S_t, V) override
    gen_logits: torch.Tensor | None = None
    light_logits: torch.Tensor | None = None
    traj: list[tuple[torch.Tensor, torch.Tensor]] = field(default_factory=list)
    raster_recon: torch.Tensor | None = None
    raster_input: torch.Tensor | None = None


@dataclass
class BatchTargets:
    tracked_teacher: torch.Tensor       # (N, S_t)
    tracked_mask: torch.Tensor
    gen_teacher: torch.Tensor           # (M, S_g)
    gen_mask: torch.Tensor
    gen_id_allowed: torch.Tensor        # (M, V) bool
    light_teacher: torch.Tensor         # (K, 4)
    light_mask: torch.Tensor
    traj_target: torch.Tensor           # (N, H, 3)
    traj_mask: torch.Tensor             # (N, H)


def _support(slot: Slot, model: WorldModel):
    """('range', start, count) or ('rows', sorted token-id tensor)."""
    vocab = model.vocab
    if slot.role == ROLE_ATTR:
        start, count = vocab.attr_range(slot.attr)
        return ("range", start, count)
    if slot.role == ROLE_KEY_CLASS:
        return ("range", vocab.class_token(AGENT_CLASSES[0]), len(AGENT_CLASSES))
    if slot.role == ROLE_KEY_ID:
        rows = [vocab.special("FRAME_END")] + \
               [vocab.agent_id_token(i) for i in range(vocab.n_agent_ids)]
        return ("rows", torch.tensor(sorted(rows), dtype=torch.long))
    if slot.role == ROLE_LIGHT_STATE:
        rows = [vocab.special("TL_END")] + \
               [vocab.light_state_token(s) for s in LIGHT_STATES]
        return ("rows", torch.tensor(sorted(rows), dtype=torch.long))
    raise ValueError(slot.role)


def _slot_ce(model: WorldModel, slot: Slot, targets: torch.Tensor,
             hidden_t: torch.Tensor | None, logits_t: torch.Tensor | None,
             id_allowed: torch.Tensor | None) -> torch.Tensor:
    """Per-row cross entropy for one decode slot over its valid support."""
    sup = _support(slot, model)
    if sup[0] == "range":
        _, start, count = sup
        if logits_t is not None:
            sub = logits_t[:, start:start + count]
        else:
            w = model.decoder.out.weight[start:start + count]
            b = model.decoder.out.bias[start:start + count]
            sub = hidden_t @ w.T + b
        return F.cross_entropy(sub, (targets - start).clamp(0, count - 1),
                               reduction="none")
    rows = sup[1].to(targets.device)
    if logits_t is not None:
        sub = logits_t[:, rows]
    else:
        sub = model.decoder.slot_logits(hidden_t, rows)
    if slot.role == ROLE_KEY_ID and id_allowed is not None:
        sub = sub.masked_fill(~id_allowed[:, rows], NEG_INF)
    pos = torch.searchsorted(rows, targets.clamp(int(rows[0]), int(rows[-1])))
    pos = pos.clamp(0, len(rows) - 1)
    return F.cross_entropy(sub, pos, reduction="none")


def _plan_ce(model: WorldModel, plan: list[Slot], teacher: torch.Tensor,
             mask: torch.Tensor, hidden: torch.Tensor | None,
             logits: torch.Tensor | None,
             id_allowed: torch.Tensor | None = None):
    """Returns (key CE sum, key count, value CE sum, value count)."""
    dtype = (hidden if hidden is not None else logits)
    dtype = dtype.dtype if dtype is not None else torch.float32
    zero = torch.zeros((), dtype=dtype)
    key_sum = val_sum = key_n = val_n = zero
    if teacher.shape[0] == 0:
        return key_sum, key_n, val_sum, val_n
    for t, slot in enumerate(plan):
        ce = _slot_ce(model, slot, teacher[:, t],
                      hidden[:, t] if hidden is not None else None,
                      logits[:, t] if logits is not None else None,
                      id_allowed if slot.role == ROLE_KEY_ID else None)
        m = mask[:, t]
        if slot.role in (ROLE_KEY_ID, ROLE_KEY_CLASS):
            key_sum = key_sum + (ce * m).sum()
            key_n = key_n + m.sum()
        else:
            val_sum = val_sum + (ce * m).sum()
            val_n = val_n + m.sum()
    return key_sum, key_n, val_sum, val_n


def multipath_loss(logits: torch.Tensor, poses: torch.Tensor,
                   target: torch.Tensor, step_mask: torch.Tensor,
                   alpha: float, beta: float) -> torch.Tensor:
    """alpha * CE(closest mode) + beta * minADE over xy, closest by xy L2."""
    if logits.shape[0] == 0:
        return logits.sum() * 0.0
    valid_rows = step_mask.sum(dim=1) > 0
    if not bool(valid_rows.any()):
        return logits.sum() * 0.0
    logits = logits[valid_rows]
    poses = poses[valid_rows]
    target = target[valid_rows]
    step_mask = step_mask[valid_rows]
    d = poses[..., :2] - target[:, None, :, :2]          # (N, M, H, 2)
    dist = d.norm(dim=-1)                                # (N, M, H)
    denom = step_mask.sum(dim=1).clamp(min=1.0)
    ade = (dist * step_mask[:, None]).sum(dim=-1) / denom[:, None]   # (N, M)
    best = ade.argmin(dim=1)
    l_cls = F.cross_entropy(logits, best)
    l_ade = ade.gather(1, best[:, None]).mean()
    return alpha * l_cls + beta * l_ade


def compute_losses(outputs: BatchOutputs, targets: BatchTargets, model: WorldModel,
                   weights: LossWeights) -> tuple[torch.Tensor, dict]:
    from ..model.decoder import PLAN_GENERATIVE, PLAN_LIGHT, PLAN_TRACKED
    plans = model.plans
    k1, kn1, v1, vn1 = _plan_ce(model, plans[PLAN_TRACKED],
                                targets.tracked_teacher, targets.tracked_mask,
                                outputs.tracked_hidden, outputs.tracked_logits)
    k2, kn2, v2, vn2 = _plan_ce(model, plans[PLAN_GENERATIVE],
                                targets.gen_teacher, targets.gen_mask,
                                outputs.gen_hidden, outputs.gen_logits,
                                id_allowed=targets.gen_id_allowed)
    k3, kn3, v3, vn3 = _plan_ce(model, plans[PLAN_LIGHT],
                                targets.light_teacher, targets.light_mask,
                                outputs.light_hidden, outputs.light_logits)
    key_n = kn1 + kn2 + kn3
    val_n = vn1 + vn2 + vn3
    if float(key_n) == 0.0 and float(val_n) == 0.0:
        raise ValueError("all CE targets are masked")
    key_ce = (k1 + k2 + k3) / key_n.clamp(min=1.0)
    val_ce = (v1 + v2 + v3) / val_n.clamp(min=1.0)
    l_ce = key_ce + val_ce
    l_rec = (outputs.raster_recon - outputs.raster_input).abs().mean()
    traj_weights = weights.traj[: len(outputs.traj)]
    l_trajs = [multipath_loss(lg, ps, targets.traj_target, targets.traj_mask,
                              weights.alpha, weights.beta)
               for lg, ps in outputs.traj]
    total = weights.rec * l_rec + weights.ce * l_ce
    for w, lt in zip(traj_weights, l_trajs):
        total = total + w * lt
    comps = {
        "ce": float(l_ce.detach()), "ce_key": float(key_ce.detach()),
        "ce_value": float(val_ce.detach()),
        "rec": float(l_rec.detach()),
        "traj": [float(lt.detach()) for lt in l_trajs],
        "n_key": float(key_n), "n_value": float(val_n),
    }
    return total, comps
