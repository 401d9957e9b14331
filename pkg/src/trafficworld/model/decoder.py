"""Recurrent chunk decoder: slot plans and the stacked-GRU token decoder.

A chunk decoded at a key position inside frame section s covers frames
s..s+H-1 in the slot order (w, l, v_x, v_y, x_0, y_0, theta_0, ...,
x_{H-1}, y_{H-1}, theta_{H-1}); generative plans prepend (id, class), and
the light plan is (x, y, theta, state). Logits outside a slot's valid mask
are -inf; in teacher mode logits are independent of any sampling settings.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..tokenizer import (SLOT_ATTR, SLOT_LIGHT_STATE, SLOT_NEWBORN_CLASS,
                         SLOT_NEWBORN_KEY, SlotDescriptor, Vocabulary,
                         valid_mask)

ROLE_KEY_ID = "key_id"
ROLE_KEY_CLASS = "key_class"
ROLE_ATTR = "attr"
ROLE_LIGHT_STATE = "light_state"

PLAN_TRACKED = "tracked"
PLAN_GENERATIVE = "generative"
PLAN_LIGHT = "light"

POSE_ATTRS = ("x", "y", "theta")
DIM_ATTRS = ("w", "l", "v_x", "v_y")


@dataclass(frozen=True)
class Slot:
    kind_index: int     # index into the slot-kind embedding table
    role: str
    attr: str | None = None   # quantizer attribute for ROLE_ATTR slots
    step: int | None = None   # chunk step for pose slots


def slot_kind_names(H: int) -> list[str]:
    names = ["id", "class", "w", "l", "v_x", "v_y"]
    for i in range(H):
        names += [f"x@{i}", f"y@{i}", f"theta@{i}"]
    names += ["light_x", "light_y", "light_theta", "light_state"]
    return names


def build_plans(H: int) -> dict[str, list[Slot]]:
    names = slot_kind_names(H)
    idx = {n: i for i, n in enumerate(names)}
    tracked = [Slot(idx[a], ROLE_ATTR, attr=a) for a in DIM_ATTRS]
    for i in range(H):
        for a in POSE_ATTRS:
            tracked.append(Slot(idx[f"{a}@{i}"], ROLE_ATTR, attr=a, step=i))
    generative = [Slot(idx["id"], ROLE_KEY_ID), Slot(idx["class"], ROLE_KEY_CLASS)] + tracked
    light = [Slot(idx["light_x"], ROLE_ATTR, attr="x"),
             Slot(idx["light_y"], ROLE_ATTR, attr="y"),
             Slot(idx["light_theta"], ROLE_ATTR, attr="theta"),
             Slot(idx["light_state"], ROLE_LIGHT_STATE)]
    return {PLAN_TRACKED: tracked, PLAN_GENERATIVE: generative, PLAN_LIGHT: light}


def slot_mask(slot: Slot, vocab: Vocabulary, used_ids=frozenset()) -> np.ndarray:
    if slot.role == ROLE_ATTR:
        return valid_mask(SlotDescriptor(SLOT_ATTR, attr=slot.attr), vocab)
    if slot.role == ROLE_KEY_ID:
        return valid_mask(SlotDescriptor(SLOT_NEWBORN_KEY, used_ids=used_ids), vocab)
    if slot.role == ROLE_KEY_CLASS:
        return valid_mask(SlotDescriptor(SLOT_NEWBORN_CLASS), vocab)
    if slot.role == ROLE_LIGHT_STATE:
        return valid_mask(SlotDescriptor(SLOT_LIGHT_STATE), vocab)
    raise ValueError(slot.role)


class ChunkDecoder(nn.Module):
    """Stacked GRU over decode slots, fed by the shared token embedding."""

    def __init__(self, d_model: int, hidden: int, layers: int, vocab_size: int,
                 n_slot_kinds: int):
        super().__init__()
        self.layers = layers
        self.hidden = hidden
        self.gru = nn.GRU(d_model, hidden, num_layers=layers, batch_first=True)
        self.h0_proj = nn.Linear(d_model, layers * hidden)
        self.slot_emb = nn.Embedding(n_slot_kinds, d_model)
        self.start = nn.Parameter(torch.zeros(d_model))
        self.out = nn.Linear(hidden, vocab_size)

    def _h0(self, h_query: torch.Tensor) -> torch.Tensor:
        B = h_query.shape[0]
        return self.h0_proj(h_query).view(B, self.layers, self.hidden).transpose(0, 1).contiguous()

    def teacher_hidden(self, h_query: torch.Tensor, plan: list[Slot],
                       teacher_tokens: torch.Tensor, token_embedding: nn.Embedding
                       ) -> torch.Tensor:
        """(B, d), (B, S) target tokens -> (B, S, hidden) GRU outputs,
        teacher-forced (no vocabulary projection)."""
        B, S = teacher_tokens.shape
        assert S == len(plan)
        kind_idx = torch.tensor([s.kind_index for s in plan], dtype=torch.long,
                                device=h_query.device)
        slot_e = self.slot_emb(kind_idx)[None].expand(B, S, -1)
        prev = token_embedding(teacher_tokens[:, :-1])
        start = self.start[None, None].expand(B, 1, -1)
        inputs = torch.cat([start, prev], dim=1) + slot_e
        out, _ = self.gru(inputs, self._h0(h_query))
        return out

    def teacher_logits(self, h_query: torch.Tensor, plan: list[Slot],
                       teacher_tokens: torch.Tensor, token_embedding: nn.Embedding
                       ) -> torch.Tensor:
        """(B, d), (B, S) target tokens -> (B, S, V) logits, teacher-forced."""
        return self.out(self.teacher_hidden(h_query, plan, teacher_tokens,
                                            token_embedding))

    def slot_logits(self, hidden_t: torch.Tensor, rows: torch.Tensor | None
                    ) -> torch.Tensor:
        """Project GRU outputs onto a subset of vocabulary rows (or all)."""
        if rows is None:
            return self.out(hidden_t)
        w = self.out.weight.index_select(0, rows)
        b = self.out.bias.index_select(0, rows)
        return hidden_t @ w.T + b

    @torch.no_grad()
    def sample(self, h_query: torch.Tensor, plan: list[Slot], vocab: Vocabulary,
               token_embedding: nn.Embedding, sample_fn, forced: list | None = None,
               used_ids=frozenset(), stop_tokens: tuple = ()) -> list[list[int]]:
        """Sequentially decode tokens for each row.

        `sample_fn(row, logits_np, mask_ids)` returns a token id; `forced`
        is an optional (B, S) array-like of token ids to force (-1 = sample).
        Rows that emit a token in `stop_tokens` at slot 0 stop immediately
        and return the single stop token.
        """
        B = h_query.shape[0]
        S = len(plan)
        h = self._h0(h_query)
        inp = self.start[None, None].expand(B, 1, -1).clone()
        tokens: list[list[int]] = [[] for _ in range(B)]
        stopped = [False] * B
        for t, slot in enumerate(plan):
            kind = torch.full((B,), slot.kind_index, dtype=torch.long,
                              device=h_query.device)
            step_in = inp + self.slot_emb(kind)[:, None]
            out, h = self.gru(step_in, h)
            logits = self.out(out[:, 0])
            mask = slot_mask(slot, vocab, used_ids=used_ids)
            chosen = torch.zeros(B, dtype=torch.long)
            for b in range(B):
                if stopped[b]:
                    continue
                if forced is not None and forced[b][t] >= 0:
                    tok = int(forced[b][t])
                else:
                    tok = int(sample_fn(b, logits[b].double().cpu().numpy(), mask))
                if t == 0 and tok in stop_tokens:
                    stopped[b] = True
                tokens[b].append(tok)
                chosen[b] = tok
            if all(stopped):
                break
            inp = token_embedding(chosen[:, None].to(h_query.device))
        return tokens
