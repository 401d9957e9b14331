"""Dynamic valid masking: the set of token ids a decoding slot may emit."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..synthworld.types import AGENT_CLASSES, LIGHT_STATES
from .vocab import Vocabulary

SLOT_ATTR = "attr"
SLOT_TRACKED_KEY = "tracked_key"
SLOT_NEWBORN_KEY = "newborn_key"
SLOT_NEWBORN_CLASS = "newborn_class"
SLOT_LIGHT_STATE = "light_state"


@dataclass(frozen=True)
class SlotDescriptor:
    kind: str
    attr: str | None = None                 # SLOT_ATTR only
    live_ids: frozenset = frozenset()       # tracked keys: live, not yet emitted
    used_ids: frozenset = frozenset()       # newborn keys: ids already taken


def valid_mask(slot: SlotDescriptor, vocab: Vocabulary) -> np.ndarray:
    """Sorted array of allowed token ids for the slot; never empty except
    for a tracked-key slot with no live agents."""
    if slot.kind == SLOT_ATTR:
        start, count = vocab.attr_range(slot.attr)
        return np.arange(start, start + count, dtype=np.int64)
    if slot.kind == SLOT_TRACKED_KEY:
        return vocab.agent_id_tokens(slot.live_ids)
    if slot.kind == SLOT_NEWBORN_KEY:
        free = [i for i in range(vocab.n_agent_ids) if i not in slot.used_ids]
        ids = [vocab.special("FRAME_END")] + [vocab.agent_id_token(i) for i in free]
        return np.asarray(sorted(ids), dtype=np.int64)
    if slot.kind == SLOT_NEWBORN_CLASS:
        return np.asarray(sorted(vocab.class_token(c) for c in AGENT_CLASSES), dtype=np.int64)
    if slot.kind == SLOT_LIGHT_STATE:
        ids = [vocab.special("TL_END")] + [vocab.light_state_token(s) for s in LIGHT_STATES]
        return np.asarray(sorted(ids), dtype=np.int64)
    raise ValueError(f"unknown slot kind {slot.kind!r}")
