"""Frame <-> token-event encoding.

Every light and agent is a (key, value) pair of two sequence positions;
specials (BOS, TL_END, NEWBORN_BEGIN, FRAME_END) and prompt tags take one.
Section grammar per frame:

    BOS (light_key light_value)* TL_END
        (tracked_key tracked_value)* NEWBORN_BEGIN
        (newborn_key newborn_value)* FRAME_END

Tracked agents are those valid in the previous frame, ego (id 0) first via
ascending-id order; everything else is a newborn. Agent velocities are
stored as agent-frame (longitudinal, lateral) components computed with the
dequantized heading, so encode -> decode returns the stored components to
within half a quantization step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..synthworld.types import (AgentState, Frame, ScenarioLog,
                                TrafficLightState, ValidationError, FRAME_DT,
                                AGENT_CLASSES, LIGHT_STATES)
from .quant import ATTR_ORDER
from .vocab import CLASSES, Vocabulary

KIND_SPECIAL = "special"
KIND_KEY = "key"
KIND_VALUE = "value"

DEFAULT_BLOCK_SIZE = 2048
DEFAULT_CONDITION_LENGTH = 3


class FrameParseError(ValueError):
    """Malformed token section; message names the offending position."""

    def __init__(self, position: int, message: str):
        super().__init__(f"position {position}: {message}")
        self.position = position


@dataclass
class TokenEvent:
    kind: str
    frame_index: int = 0
    token: int | None = None            # SPECIAL / prompt tag
    id_token: int | None = None         # KEY
    class_token: int | None = None      # KEY
    attr_tokens: tuple = ()             # VALUE: bins in vocab attr order
    attr_values: tuple = ()             # VALUE: raw stored values (for sinusoidal)
    state_token: int | None = None      # VALUE of a light
    obj: int | None = None              # agent id or anchor index
    is_light: bool = False


@dataclass
class TokenWindow:
    events: list[TokenEvent]
    first_frame: int
    last_frame: int
    condition_length: int

    def __len__(self):
        return len(self.events)


def logical_event_count(events) -> int:
    """Pairs count once: number of specials plus number of keys."""
    return sum(1 for e in events if e.kind != KIND_VALUE)


def stored_velocity(agent: AgentState, theta_hat: float) -> tuple[float, float]:
    """Agent-frame (longitudinal, lateral) speed using the given heading."""
    c, s = math.cos(theta_hat), math.sin(theta_hat)
    return agent.v_x * c + agent.v_y * s, -agent.v_x * s + agent.v_y * c


def agent_events(agent: AgentState, vocab: Vocabulary, frame_index: int) -> list[TokenEvent]:
    q = vocab.quant
    th_bin = q.quantize("theta", agent.theta)
    th_hat = q.dequantize("theta", th_bin)
    v_lon, v_lat = stored_velocity(agent, th_hat)
    raw = {"x": agent.x, "y": agent.y, "theta": agent.theta,
           "w": agent.w, "l": agent.l, "v_x": v_lon, "v_y": v_lat}
    bins = tuple(th_bin if n == "theta" else q.quantize(n, raw[n]) for n in ATTR_ORDER)
    key = TokenEvent(KIND_KEY, frame_index,
                     id_token=vocab.agent_id_token(agent.agent_id),
                     class_token=vocab.class_token(agent.agent_class),
                     obj=agent.agent_id)
    value = TokenEvent(KIND_VALUE, frame_index,
                       attr_tokens=bins,
                       attr_values=tuple(raw[n] for n in ATTR_ORDER),
                       obj=agent.agent_id)
    return [key, value]


def light_events(light: TrafficLightState, anchor_pose, vocab: Vocabulary,
                  frame_index: int) -> list[TokenEvent]:
    q = vocab.quant
    ax, ay, ath = anchor_pose
    bins = (q.quantize("x", ax), q.quantize("y", ay), q.quantize("theta", ath))
    key = TokenEvent(KIND_KEY, frame_index,
                     id_token=vocab.agent_id_token(light.anchor),
                     class_token=vocab.class_token("traffic_light"),
                     obj=light.anchor, is_light=True)
    value = TokenEvent(KIND_VALUE, frame_index,
                       attr_tokens=bins, attr_values=(ax, ay, ath),
                       state_token=vocab.light_state_token(light.state),
                       obj=light.anchor, is_light=True)
    return [key, value]


def encode_frame(frame: Frame, prev_frame: Frame | None, vocab: Vocabulary,
                 anchors, frame_index: int = 0) -> list[TokenEvent]:
    """Tokenize one frame given the previous frame (or None => all newborn)."""
    ids = [a.agent_id for a in frame.agents]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate agent ids in frame")
    sp = lambda name: TokenEvent(KIND_SPECIAL, frame_index, token=vocab.special(name))
    events = [sp("BOS")]
    for light in sorted(frame.lights, key=lambda lt: lt.anchor):
        events += light_events(light, anchors[light.anchor], vocab, frame_index)
    events.append(sp("TL_END"))
    prev_ids = {a.agent_id for a in prev_frame.valid_agents()} if prev_frame else set()
    agents = sorted(frame.valid_agents(), key=lambda a: a.agent_id)
    for a in agents:
        if a.agent_id in prev_ids:
            events += agent_events(a, vocab, frame_index)
    events.append(sp("NEWBORN_BEGIN"))
    for a in agents:
        if a.agent_id not in prev_ids:
            events += agent_events(a, vocab, frame_index)
    events.append(sp("FRAME_END"))
    return events


def decode_agent_value(vocab: Vocabulary, agent_id: int, class_token: int,
                       attr_tokens) -> AgentState:
    q = vocab.quant
    vals = {n: q.dequantize(n, b) for n, b in zip(ATTR_ORDER, attr_tokens)}
    th = vals["theta"]
    c, s = math.cos(th), math.sin(th)
    v_lon, v_lat = vals["v_x"], vals["v_y"]
    cls = CLASSES[vocab.token_info(class_token)[1]]
    return AgentState(agent_id, cls, vals["x"], vals["y"], th,
                      v_lon * c - v_lat * s, v_lon * s + v_lat * c,
                      vals["w"], vals["l"])


def decode_frame(events, vocab: Vocabulary, time: float = 0.0) -> Frame:
    """Inverse of encode_frame for a single frame section."""
    agents: list[AgentState] = []
    lights: list[TrafficLightState] = []
    section = "start"
    pending_key: TokenEvent | None = None
    for pos, e in enumerate(events):
        if e.kind == KIND_SPECIAL:
            if pending_key is not None:
                raise FrameParseError(pos, "key without value")
            tkind, tidx = vocab.token_info(e.token)
            if tkind != "special":
                raise FrameParseError(pos, f"unexpected {tkind} token in frame section")
            name = ("BOS", "TL_END", "NEWBORN_BEGIN", "FRAME_END", "PAD")[tidx]
            order = {"start": "BOS", "lights": "TL_END", "tracked": "NEWBORN_BEGIN",
                     "newborn": "FRAME_END"}
            if order.get(section) != name:
                raise FrameParseError(pos, f"unexpected {name} in section {section}")
            section = {"BOS": "lights", "TL_END": "tracked",
                       "NEWBORN_BEGIN": "newborn", "FRAME_END": "done"}[name]
        elif e.kind == KIND_KEY:
            if section not in ("lights", "tracked", "newborn"):
                raise FrameParseError(pos, f"key in section {section}")
            if pending_key is not None:
                raise FrameParseError(pos, "two keys in a row")
            pending_key = e
        elif e.kind == KIND_VALUE:
            if pending_key is None:
                raise FrameParseError(pos, "value event before any key")
            kind, idx = vocab.token_info(pending_key.id_token)
            if kind != "agent_id":
                raise FrameParseError(pos, "key id token is not an agent id")
            if pending_key.class_token == vocab.class_token("traffic_light"):
                if e.state_token is None:
                    raise FrameParseError(pos, "light value lacks a state token")
                state = LIGHT_STATES[vocab.token_info(e.state_token)[1]]
                lights.append(TrafficLightState(idx, state))
            else:
                if len(e.attr_tokens) != len(ATTR_ORDER):
                    raise FrameParseError(pos, "agent value arity mismatch")
                agents.append(decode_agent_value(vocab, idx, pending_key.class_token,
                                                 e.attr_tokens))
            pending_key = None
        else:
            raise FrameParseError(pos, f"unknown event kind {e.kind!r}")
    if section != "done":
        raise FrameParseError(len(events), f"section {section} not terminated")
    agents.sort(key=lambda a: a.agent_id)
    return Frame(time=time, lights=lights, agents=agents)


def build_window(log: ScenarioLog, t: int, condition_length: int = DEFAULT_CONDITION_LENGTH,
                 vocab: Vocabulary | None = None, block_size: int = DEFAULT_BLOCK_SIZE,
                 include_prompt: bool = False) -> TokenWindow:
    """Concatenated encodings of frames t-cl+1..t, oldest-first truncation."""
    vocab = vocab or Vocabulary()
    if not condition_length >= 1:
        raise ValueError("condition_length must be >= 1")
    if t < condition_length - 1 or t >= len(log.frames):
        raise ValueError(f"frame index {t} out of range for condition_length {condition_length}")
    anchors = log.map.traffic_light_anchors
    start = t - condition_length + 1
    sections = []
    for fi in range(start, t + 1):
        prev = log.frames[fi - 1] if fi > 0 else None
        sections.append(encode_frame(log.frames[fi], prev, vocab, anchors, frame_index=fi))
    prompt_events = []
    if include_prompt:
        seen = set()
        for tag in log.prompt:
            if tag not in seen:
                seen.add(tag)
                prompt_events.append(TokenEvent(KIND_SPECIAL, start,
                                                token=vocab.prompt_token(tag)))
    n_prompt = len(prompt_events)
    while sections and n_prompt + sum(len(s) for s in sections) > block_size:
        if len(sections) == 1:
            raise ValueError("single frame exceeds the block size")
        sections.pop(0)
        start += 1
    events = prompt_events + [e for s in sections for e in s]
    return TokenWindow(events=events, first_frame=start, last_frame=t,
                       condition_length=len(sections))
