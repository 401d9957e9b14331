"""Teacher-forced training sample assembly.

Each sample is one token window plus its decode-slot targets:

  - a tracked chunk (w, l, v_x, v_y, H poses) at every agent key position,
    with targets taken from log frames s..s+H-1;
  - a generative chunk (id, class, dims, poses) at each newborn
    pre-position, with a FRAME_END terminator target closing the section;
  - a light chunk (x, y, theta, state) at every light key position;
  - continuous H-step pose offsets for the trajectory heads at agent keys.

Windows are translated so the center agent at the newest frame sits at the
origin; the raster is drawn around the same point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..synthworld.raster import RasterConfig, rasterize
from ..synthworld.types import AgentState, Frame, ScenarioLog
from ..tokenizer import (ATTR_ORDER, KIND_KEY, KIND_SPECIAL, TokenEvent,
                         Vocabulary)
from ..tokenizer.events import agent_events, encode_frame, stored_velocity
from ..model.config import ModelConfig
from ..model.decoder import DIM_ATTRS, POSE_ATTRS
from ..model.tensorize import tensorize_events


@dataclass
class QueryTargets:
    positions: np.ndarray          # (N,) event indices
    teacher: np.ndarray            # (N, S) full-vocab token ids
    mask: np.ndarray               # (N, S) float, 0 disables a slot's loss
    id_allowed: np.ndarray | None = None   # (N, V) bool, generative id slots


@dataclass
class TrainItem:
    seq: dict                      # tensorize_events output
    raster: np.ndarray             # (C, G, G)
    tracked: QueryTargets
    gen: QueryTargets
    light: QueryTargets
    traj_target: np.ndarray        # (N_tracked, H, 3) offsets from reference
    traj_mask: np.ndarray          # (N_tracked, H)
    n_key_slots: int
    n_value_slots: int


def _translate(frame: Frame, dx: float, dy: float) -> Frame:
    agents = [AgentState(a.agent_id, a.agent_class, a.x + dx, a.y + dy, a.theta,
                         a.v_x, a.v_y, a.w, a.l, a.valid) for a in frame.agents]
    return Frame(frame.time, list(frame.lights), agents)


def _agent_value_bins(agent: AgentState, vocab: Vocabulary) -> list[int]:
    """Full-vocab token ids of the 7 stored attributes, vocab order."""
    q = vocab.quant
    th_bin = q.quantize("theta", agent.theta)
    th_hat = q.dequantize("theta", th_bin)
    lon, lat = stored_velocity(agent, th_hat)
    raw = {"x": agent.x, "y": agent.y, "theta": agent.theta, "w": agent.w,
           "l": agent.l, "v_x": lon, "v_y": lat}
    out = []
    for name in ATTR_ORDER:
        b = th_bin if name == "theta" else q.quantize(name, raw[name])
        out.append(vocab.attr_token(name, b))
    return out


def build_train_item(log: ScenarioLog, t: int, model_cfg: ModelConfig,
                     vocab: Vocabulary, condition_length: int = 3,
                     raster_cfg: RasterConfig | None = None,
                     include_prompt: bool | None = None) -> TrainItem:
    H = model_cfg.chunk_horizon
    cl = min(condition_length, t + 1)
    start = t - cl + 1
    last = log.frames[t]
    center_agent = last.agent_by_id(0)
    if center_agent is None or not center_agent.valid:
        valid = last.valid_agents()
        center_agent = valid[0] if valid else None
    cx, cy = (center_agent.x, center_agent.y) if center_agent else (0.0, 0.0)

    anchors = [(ax - cx, ay - cy, ath) for ax, ay, ath in log.map.traffic_light_anchors]
    events: list[TokenEvent] = []
    if include_prompt is None:
        include_prompt = start == 0
    if include_prompt:
        for tag in dict.fromkeys(log.prompt):
            if tag in vocab.prompt_tags:
                events.append(TokenEvent(KIND_SPECIAL, start,
                                         token=vocab.prompt_token(tag)))
    frame_sections: list[tuple[int, int]] = []   # (frame index, section start pos)
    for fi in range(start, t + 1):
        prev = log.frames[fi - 1] if fi > 0 else None
        fr = _translate(log.frames[fi], -cx, -cy)
        prev_t = _translate(prev, -cx, -cy) if prev is not None else None
        frame_sections.append((fi, len(events)))
        events += encode_frame(fr, prev_t, vocab, anchors, frame_index=fi)

    attr_index = {n: i for i, n in enumerate(ATTR_ORDER)}
    q = vocab.quant

    def _translate_agent(a: AgentState) -> AgentState:
        return AgentState(a.agent_id, a.agent_class, a.x - cx, a.y - cy, a.theta,
                          a.v_x, a.v_y, a.w, a.l, a.valid)

    def chunk_targets(agent_id: int, s: int):
        """(teacher 16, mask 16, traj (H,3), traj mask (H)) for a chunk at section s."""
        a0 = log.frames[s].agent_by_id(agent_id)
        bins0 = _agent_value_bins(_translate_agent(a0), vocab)
        teacher = [bins0[attr_index[n]] for n in DIM_ATTRS]
        mask = [1.0] * 4
        traj = np.zeros((H, 3))
        traj_m = np.zeros(H)
        ref = None
        if s - 1 >= 0:
            pa = log.frames[s - 1].agent_by_id(agent_id)
            if pa is not None and pa.valid:
                ref = (pa.x - cx, pa.y - cy)
        if ref is None:
            ref = (a0.x - cx, a0.y - cy)
        last_pose = None
        for j in range(H):
            fj = s + j
            aj = log.frames[fj].agent_by_id(agent_id) if fj < len(log.frames) else None
            if aj is not None and aj.valid:
                bj = _agent_value_bins(_translate_agent(aj), vocab)
                pose_toks = [bj[attr_index[n]] for n in POSE_ATTRS]
                last_pose = pose_toks
                teacher += pose_toks
                mask += [1.0] * 3
                traj[j] = (aj.x - cx - ref[0], aj.y - cy - ref[1], aj.theta)
                traj_m[j] = 1.0
            else:
                filler = last_pose or [bins0[attr_index[n]] for n in POSE_ATTRS]
                teacher += filler
                mask += [0.0] * 3
        return teacher, mask, traj, traj_m

    tracked_rows, gen_rows, light_rows = [], [], []
    traj_targets, traj_masks = [], []
    frame_end = vocab.special("FRAME_END")
    nb_begin = vocab.special("NEWBORN_BEGIN")

    for (fi, sec_start) in frame_sections:
        sec_events = []
        i = sec_start
        while i < len(events) and (not sec_events or
                                   events[i].kind != KIND_SPECIAL or
                                   events[i].token != frame_end):
            sec_events.append((i, events[i]))
            i += 1
        if i < len(events):
            sec_events.append((i, events[i]))   # FRAME_END itself
        # light and agent keys
        newborn_started = False
        pre_positions = []
        newborn_targets = []
        used_ids = set()
        for pos, e in sec_events:
            if e.kind == KIND_SPECIAL and e.token == nb_begin:
                newborn_started = True
                pre_positions.append((pos, used_ids.copy()))
            elif e.kind == KIND_KEY and e.is_light:
                anchor = anchors[e.obj]
                teacher = [vocab.attr_token("x", q.quantize("x", anchor[0])),
                           vocab.attr_token("y", q.quantize("y", anchor[1])),
                           vocab.attr_token("theta", q.quantize("theta", anchor[2]))]
                lt = next(l for l in log.frames[fi].lights if l.anchor == e.obj)
                teacher.append(vocab.light_state_token(lt.state))
                light_rows.append((pos, teacher, [1.0] * 4))
            elif e.kind == KIND_KEY:
                teacher, mask, traj, traj_m = chunk_targets(e.obj, fi)
                tracked_rows.append((pos, teacher, mask))
                traj_targets.append(traj)
                traj_masks.append(traj_m)
                if newborn_started:
                    agent = log.frames[fi].agent_by_id(e.obj)
                    nb_teacher = [vocab.agent_id_token(e.obj),
                                  vocab.class_token(agent.agent_class)] + teacher
                    nb_mask = [1.0, 1.0] + mask
                    newborn_targets.append((nb_teacher, nb_mask))
                used_ids.add(e.obj)
                # value position of a newborn is the next pre-position
                if newborn_started:
                    pre_positions.append((pos + 1, used_ids.copy()))
        # pair pre-positions with newborn (or terminator) targets
        S_g = 2 + len(DIM_ATTRS) + 3 * H
        for k, (pos, used) in enumerate(pre_positions):
            if k < len(newborn_targets):
                teacher, mask = newborn_targets[k]
            else:
                teacher = [frame_end] + [0] * (S_g - 1)
                mask = [1.0] + [0.0] * (S_g - 1)
            allowed = np.zeros(vocab.size, dtype=bool)
            allowed[frame_end] = True
            for aid in range(vocab.n_agent_ids):
                if aid not in used:
                    allowed[vocab.agent_id_token(aid)] = True
            gen_rows.append((pos, teacher, mask, allowed))

    def pack(rows, n_slots, with_allowed=False) -> QueryTargets:
        positions = np.array([r[0] for r in rows], dtype=np.int64) if rows else \
            np.zeros(0, dtype=np.int64)
        teacher = np.array([r[1] for r in rows], dtype=np.int64) if rows else \
            np.zeros((0, n_slots), dtype=np.int64)
        mask = np.array([r[2] for r in rows], dtype=np.float64) if rows else \
            np.zeros((0, n_slots))
        allowed = None
        if with_allowed:
            allowed = np.array([r[3] for r in rows], dtype=bool) if rows else \
                np.zeros((0, vocab.size), dtype=bool)
        return QueryTargets(positions=positions, teacher=teacher, mask=mask,
                            id_allowed=allowed)

    S_t = len(DIM_ATTRS) + 3 * H
    tracked = pack(tracked_rows, S_t)
    gen = pack(gen_rows, S_t + 2, with_allowed=True)
    light = pack(light_rows, 4)
    n_key = int(gen.mask[:, :2].sum()) if len(gen_rows) else 0
    n_value = int(tracked.mask.sum() + light.mask.sum())
    if len(gen_rows):
        n_value += int(gen.mask[:, 2:].sum())

    raster_cfg = raster_cfg or RasterConfig(grid=model_cfg.raster_grid)
    raster = rasterize(log.map, log.frames[t], (cx, cy, 0.0), raster_cfg)
    return TrainItem(
        seq=tensorize_events(events, vocab), raster=raster,
        tracked=tracked, gen=gen, light=light,
        traj_target=np.array(traj_targets) if traj_targets else np.zeros((0, H, 3)),
        traj_mask=np.array(traj_masks) if traj_masks else np.zeros((0, H)),
        n_key_slots=n_key, n_value_slots=n_value,
    )
