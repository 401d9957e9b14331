"""Token id layout.

Contiguous ranges: specials 0-7, classes 8-15, agent ids, light states,
prompt tags, then one range per attribute in the order x, y, theta, w, l,
v_x, v_y. With the default quantizer and 128 ids / 12 tags this gives
specials 0-7, classes 8-15, ids 16-143, lights 144-147, tags 148-159,
x from 160, total size 2604.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..synthworld.types import AGENT_CLASSES, LIGHT_STATES, PROMPT_TAGS
from .quant import ATTR_ORDER, QuantSpec

SPECIALS = ("BOS", "TL_END", "NEWBORN_BEGIN", "FRAME_END", "PAD")
N_SPECIAL_SLOTS = 8
CLASSES = AGENT_CLASSES + ("traffic_light",)
N_CLASS_SLOTS = 8


@dataclass
class Vocabulary:
    quant: QuantSpec = field(default_factory=QuantSpec.default)
    n_agent_ids: int = 128
    prompt_tags: tuple[str, ...] = PROMPT_TAGS

    def __post_init__(self):
        self.ids_offset = N_SPECIAL_SLOTS + N_CLASS_SLOTS
        self.lights_offset = self.ids_offset + self.n_agent_ids
        self.prompts_offset = self.lights_offset + len(LIGHT_STATES)
        self.attr_offsets: dict[str, int] = {}
        off = self.prompts_offset + len(self.prompt_tags)
        for a in self.quant.attrs:
            self.attr_offsets[a.name] = off
            off += a.count
        self.size = off

    # --- forward maps -------------------------------------------------
    def special(self, name: str) -> int:
        return SPECIALS.index(name)

    def class_token(self, name: str) -> int:
        return N_SPECIAL_SLOTS + CLASSES.index(name)

    def agent_id_token(self, agent_id: int) -> int:
        if not 0 <= agent_id < self.n_agent_ids:
            raise ValueError(f"agent id {agent_id} out of range")
        return self.ids_offset + agent_id

    def light_state_token(self, state: str) -> int:
        return self.lights_offset + LIGHT_STATES.index(state)

    def prompt_token(self, tag: str) -> int:
        return self.prompts_offset + self.prompt_tags.index(tag)

    def attr_token(self, name: str, bin_index: int) -> int:
        count = self.quant.attr(name).count
        if not 0 <= bin_index < count:
            raise ValueError(f"{name}: bin {bin_index} out of [0, {count})")
        return self.attr_offsets[name] + bin_index

    def attr_range(self, name: str) -> tuple[int, int]:
        """(first token id, bin count) for an attribute."""
        return self.attr_offsets[name], self.quant.attr(name).count

    # --- inverse map ----------------------------------------------------
    def token_info(self, token: int) -> tuple[str, int]:
        """(kind, index); kind is 'special' | 'class' | 'agent_id' |
        'light_state' | 'prompt' | attribute name. Reserved slots raise."""
        if not 0 <= token < self.size:
            raise ValueError(f"token {token} out of range")
        if token < N_SPECIAL_SLOTS:
            if token >= len(SPECIALS):
                raise ValueError(f"token {token} is a reserved special slot")
            return "special", token
        if token < self.ids_offset:
            idx = token - N_SPECIAL_SLOTS
            if idx >= len(CLASSES):
                raise ValueError(f"token {token} is a reserved class slot")
            return "class", idx
        if token < self.lights_offset:
            return "agent_id", token - self.ids_offset
        if token < self.prompts_offset:
            return "light_state", token - self.lights_offset
        if token < self.prompts_offset + len(self.prompt_tags):
            return "prompt", token - self.prompts_offset
        for name in ATTR_ORDER:
            start = self.attr_offsets[name]
            count = self.quant.attr(name).count
            if start <= token < start + count:
                return name, token - start
        raise AssertionError("unreachable")

    def agent_id_tokens(self, ids) -> np.ndarray:
        return np.asarray(sorted(self.ids_offset + int(i) for i in ids), dtype=np.int64)

    def dump(self) -> str:
        """Layout table (token id -> kind/index) for conformance checks."""
        lines = [f"vocabulary_size\t{self.size}"]
        lines.append(f"specials\t0\t{len(SPECIALS)}\t{','.join(SPECIALS)}")
        lines.append(f"classes\t{N_SPECIAL_SLOTS}\t{len(CLASSES)}\t{','.join(CLASSES)}")
        lines.append(f"agent_ids\t{self.ids_offset}\t{self.n_agent_ids}")
        lines.append(f"light_states\t{self.lights_offset}\t{len(LIGHT_STATES)}\t{','.join(LIGHT_STATES)}")
        lines.append(f"prompt_tags\t{self.prompts_offset}\t{len(self.prompt_tags)}\t{','.join(self.prompt_tags)}")
        for a in self.quant.attrs:
            lines.append(f"attr:{a.name}\t{self.attr_offsets[a.name]}\t{a.count}"
                         f"\tlo={a.lo!r},hi={a.hi!r},step={a.step!r}")
        return "\n".join(lines) + "\n"
