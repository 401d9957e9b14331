"""Token events -> dense arrays consumable by the network.

Each position carries up to two plain tokens (special; or key id+class; or a
light value's state token rides alongside its coordinate attributes) and up
to 7 (attribute token, normalized value) terms. Absent entries are index 0
with a zero mask.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..tokenizer import ATTR_ORDER, KIND_KEY, KIND_SPECIAL, KIND_VALUE, Vocabulary

N_ATTR = len(ATTR_ORDER)


@dataclass
class SeqTensors:
    plain_tokens: torch.Tensor   # (B, L, 2) int64
    plain_mask: torch.Tensor     # (B, L, 2) bool
    attr_tokens: torch.Tensor    # (B, L, 7) int64
    attr_norms: torch.Tensor     # (B, L, 7) float
    attr_mask: torch.Tensor      # (B, L, 7) bool
    positions: torch.Tensor      # (B, L) int64
    length_mask: torch.Tensor    # (B, L) bool, False on PAD

    @property
    def batch(self) -> int:
        return self.plain_tokens.shape[0]

    @property
    def length(self) -> int:
        return self.plain_tokens.shape[1]


def tensorize_events(events, vocab: Vocabulary) -> dict:
    """One window -> numpy arrays (unbatched)."""
    L = len(events)
    plain = np.zeros((L, 2), dtype=np.int64)
    plain_m = np.zeros((L, 2), dtype=bool)
    attr = np.zeros((L, N_ATTR), dtype=np.int64)
    norms = np.zeros((L, N_ATTR), dtype=np.float64)
    attr_m = np.zeros((L, N_ATTR), dtype=bool)
    q = vocab.quant
    for i, e in enumerate(events):
        if e.kind == KIND_SPECIAL:
            plain[i, 0] = e.token
            plain_m[i, 0] = True
        elif e.kind == KIND_KEY:
            plain[i, 0] = e.id_token
            plain[i, 1] = e.class_token
            plain_m[i, :] = True
        elif e.kind == KIND_VALUE:
            names = ATTR_ORDER[: len(e.attr_tokens)]
            for j, (name, b) in enumerate(zip(names, e.attr_tokens)):
                attr[i, j] = vocab.attr_token(name, int(b))
                norms[i, j] = q.normalize(name, e.attr_values[j])
                attr_m[i, j] = True
            if e.state_token is not None:
                plain[i, 0] = e.state_token
                plain_m[i, 0] = True
        else:
            raise ValueError(f"unknown event kind {e.kind!r}")
    return {"plain_tokens": plain, "plain_mask": plain_m, "attr_tokens": attr,
            "attr_norms": norms, "attr_mask": attr_m,
            "positions": np.arange(L, dtype=np.int64)}


def collate(items: list[dict], vocab: Vocabulary, dtype=torch.float32) -> SeqTensors:
    """Pad a list of tensorized windows to the longest (PAD special token)."""
    L = max(x["plain_tokens"].shape[0] for x in items)
    B = len(items)
    pad_tok = vocab.special("PAD")
    plain = np.full((B, L, 2), 0, dtype=np.int64)
    plain[:, :, 0] = pad_tok
    plain_m = np.zeros((B, L, 2), dtype=bool)
    plain_m[:, :, 0] = True
    attr = np.zeros((B, L, N_ATTR), dtype=np.int64)
    norms = np.zeros((B, L, N_ATTR), dtype=np.float64)
    attr_m = np.zeros((B, L, N_ATTR), dtype=bool)
    pos = np.tile(np.arange(L, dtype=np.int64), (B, 1))
    lmask = np.zeros((B, L), dtype=bool)
    for b, x in enumerate(items):
        n = x["plain_tokens"].shape[0]
        plain[b, :n] = x["plain_tokens"]
        plain_m[b, :n] = x["plain_mask"]
        attr[b, :n] = x["attr_tokens"]
        norms[b, :n] = x["attr_norms"]
        attr_m[b, :n] = x["attr_mask"]
        lmask[b, :n] = True
    return SeqTensors(
        plain_tokens=torch.from_numpy(plain),
        plain_mask=torch.from_numpy(plain_m),
        attr_tokens=torch.from_numpy(attr),
        attr_norms=torch.from_numpy(norms).to(dtype),
        attr_mask=torch.from_numpy(attr_m),
        positions=torch.from_numpy(pos),
        length_mask=torch.from_numpy(lmask),
    )


def tensorize_window(events, vocab: Vocabulary, dtype=torch.float32) -> SeqTensors:
    return collate([tensorize_events(events, vocab)], vocab, dtype=dtype)
