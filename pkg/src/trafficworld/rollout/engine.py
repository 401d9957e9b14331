"""Inference engines: scene generation, full-AR and partial-AR extrapolation,
batched rollouts.

Coordinates: committed frames live in world coordinates. Each step re-encodes
the conditioning window translated so the ego (or last known center) at the
window's newest frame sits at the origin, keeping activity inside the
quantizer box; decoded states are translated back before committing. The
context raster is drawn around the same center with heading 0.

Cost model (no KV caching): full-AR runs one transformer forward per decoded
pair; partial-AR runs exactly two forwards per frame plus one per accepted
newborn.
"""
from __future__ import annotations

import copy
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import torch

from ..synthworld.raster import RasterConfig, rasterize
from ..synthworld.types import (AgentState, Frame, MapModel, ScenarioLog,
                                TrafficLightState, FRAME_DT, LIGHT_STATES,
                                MAX_AGENTS)
from ..tokenizer import (ATTR_ORDER, CLASSES, KIND_KEY, KIND_SPECIAL,
                         KIND_VALUE, TokenEvent, Vocabulary)
from ..tokenizer.events import agent_events, light_events
from ..model import (PLAN_GENERATIVE, PLAN_LIGHT, PLAN_TRACKED, WorldModel,
                     tensorize_window)
from ..model.decoder import DIM_ATTRS, POSE_ATTRS
from .aggregate import ChunkAggregator, DEFAULT_GAMMA
from .sampler import SamplerConfig, sample_token

MODE_FULL_AR = "full-ar"
MODE_PARTIAL_AR = "partial-ar"


@dataclass
class SimState:
    map: MapModel
    frames: list[Frame]
    rng: np.random.Generator
    frame0_index: int = 0
    aggregators: dict[int, ChunkAggregator] = field(default_factory=dict)
    light_states: dict[int, str] = field(default_factory=dict)
    center: tuple[float, float] = (0.0, 0.0)
    forward_count: int = 0
    _raster_cache: tuple[int, np.ndarray] | None = None

    @property
    def next_frame_index(self) -> int:
        return self.frame0_index + len(self.frames)


@dataclass
class RolloutBatch:
    source: ScenarioLog
    start_t: int
    horizon_s: float
    mode: str
    policy_names: list[str]
    seeds: list[list[int]]            # (N_p, N_r)
    logs: list[list[ScenarioLog]]     # (N_p, N_r)

    @property
    def n_policies(self) -> int:
        return len(self.logs)

    @property
    def n_rollouts(self) -> int:
        return len(self.logs[0]) if self.logs else 0

    def flat_logs(self) -> list[ScenarioLog]:
        return [lg for row in self.logs for lg in row]


class RolloutEngine:
    def __init__(self, model: WorldModel, sampler: SamplerConfig | None = None,
                 gamma_agg: float = DEFAULT_GAMMA, condition_length: int = 3,
                 raster_cfg: RasterConfig | None = None,
                 max_newborn_per_frame: int = 8):
        self.model = model.eval()
        self.vocab: Vocabulary = model.vocab
        self.quant = self.vocab.quant
        self.sampler = sampler or SamplerConfig()
        self.gamma_agg = gamma_agg
        self.cl = condition_length
        self.H = model.cfg.chunk_horizon
        self.raster_cfg = raster_cfg or RasterConfig(grid=model.cfg.raster_grid)
        self.max_newborn = max_newborn_per_frame
        self._frame_end = self.vocab.special("FRAME_END")
        self._tl_end = self.vocab.special("TL_END")

    # ------------------------------------------------------------------
    # window construction and forwards
    # ------------------------------------------------------------------
    def make_state(self, map_model: MapModel, frames: list[Frame], seed: int,
                   frame0_index: int = 0) -> SimState:
        state = SimState(map=map_model, frames=[copy.deepcopy(f) for f in frames],
                         rng=np.random.default_rng(np.random.Philox(key=seed)),
                         frame0_index=frame0_index)
        if frames:
            for lt in frames[-1].lights:
                state.light_states[lt.anchor] = lt.state
            state.center = self._center_of(state)
        return state

    def _center_of(self, state: SimState) -> tuple[float, float]:
        last = state.frames[-1]
        ego = last.agent_by_id(0)
        if ego is not None and ego.valid:
            return (ego.x, ego.y)
        if last.valid_agents():
            a = last.valid_agents()[0]
            return (a.x, a.y)
        return state.center

    @staticmethod
    def _translate_frame(frame: Frame, dx: float, dy: float) -> Frame:
        agents = [AgentState(a.agent_id, a.agent_class, a.x + dx, a.y + dy,
                             a.theta, a.v_x, a.v_y, a.w, a.l, a.valid)
                  for a in frame.agents]
        return Frame(frame.time, list(frame.lights), agents)

    def _window_events(self, state: SimState) -> tuple[list[TokenEvent], tuple[float, float]]:
        from ..tokenizer.events import encode_frame
        cx, cy = self._center_of(state)
        state.center = (cx, cy)
        cl = min(self.cl, len(state.frames))
        anchors = [(ax - cx, ay - cy, ath)
                   for ax, ay, ath in state.map.traffic_light_anchors]
        events: list[TokenEvent] = []
        n = len(state.frames)
        for offset in range(n - cl, n):
            prev = state.frames[offset - 1] if offset > 0 else None
            fr = self._translate_frame(state.frames[offset], -cx, -cy)
            prev_t = self._translate_frame(prev, -cx, -cy) if prev is not None else None
            events += encode_frame(fr, prev_t, self.vocab, anchors,
                                   frame_index=state.frame0_index + offset)
        return events, (cx, cy)

    def _raster(self, state: SimState) -> torch.Tensor:
        key = len(state.frames)
        if state._raster_cache is None or state._raster_cache[0] != key:
            cx, cy = state.center
            grid = rasterize(state.map, state.frames[-1], (cx, cy, 0.0), self.raster_cfg)
            state._raster_cache = (key, grid)
        dtype = self.model.token_emb.weight.dtype
        return torch.from_numpy(state._raster_cache[1][None]).to(dtype)

    def _forward(self, events: list[TokenEvent], state: SimState) -> torch.Tensor:
        if len(events) > self.model.cfg.block_size:
            raise ValueError(f"window of {len(events)} events exceeds block size")
        seq = tensorize_window(events, self.vocab, dtype=self.model.token_emb.weight.dtype)
        with torch.no_grad():
            hidden, _, _ = self.model(seq, self._raster(state))
        state.forward_count += 1
        return hidden[0]

    # ------------------------------------------------------------------
    # chunk parsing
    # ------------------------------------------------------------------
    def _parse_chunk(self, tokens: list[int]) -> dict:
        """Tracked-plan tokens -> dims, stored velocity and (H, 3) poses."""
        q = self.quant
        v = self.vocab
        vals = {}
        for name, tok in zip(DIM_ATTRS, tokens[:4]):
            vals[name] = q.dequantize(name, tok - v.attr_offsets[name])
        poses = np.zeros((self.H, 3))
        bins0 = {}
        for i in range(self.H):
            for j, name in enumerate(POSE_ATTRS):
                tok = tokens[4 + 3 * i + j]
                b = tok - v.attr_offsets[name]
                poses[i, j] = q.dequantize(name, b)
                if i == 0:
                    bins0[name] = b
        return {"w": vals["w"], "l": vals["l"], "v_lon": vals["v_x"],
                "v_lat": vals["v_y"], "poses": poses, "bins0": bins0}

    def _is_sentinel(self, bins0: dict) -> bool:
        for name in ("x", "y"):
            count = self.quant.attr(name).count
            if bins0[name] in (0, count - 1):
                return True
        return False

    def _committed_agent(self, agent_id: int, agent_class: str, chunk: dict,
                         pose: tuple[float, float, float]) -> AgentState:
        x, y, th = pose
        c, s = math.cos(th), math.sin(th)
        vx = chunk["v_lon"] * c - chunk["v_lat"] * s
        vy = chunk["v_lon"] * s + chunk["v_lat"] * c
        return AgentState(agent_id, agent_class, x, y, th, vx, vy,
                          chunk["w"], chunk["l"])

    def _sample_fn(self, state: SimState, scene: bool = False):
        def fn(row, logits, mask):
            return sample_token(logits, mask, self.sampler, state.rng, scene=scene)
        return fn

    def _decode_tracked(self, hiddens: torch.Tensor, state: SimState) -> list[dict]:
        tokens = self.model.decoder.sample(
            hiddens, self.model.plans[PLAN_TRACKED], self.vocab,
            self.model.token_emb, self._sample_fn(state))
        return [self._parse_chunk(t) for t in tokens]

    def _decode_light_state(self, hidden: torch.Tensor, anchor_xy_th, state: SimState,
                            scene: bool = False) -> tuple[str, tuple]:
        """Returns (state name, (x, y, theta) value coordinates)."""
        q, v = self.quant, self.vocab
        if scene:
            forced = None
        else:
            ax, ay, ath = anchor_xy_th
            forced = [[v.attr_token("x", q.quantize("x", ax)),
                       v.attr_token("y", q.quantize("y", ay)),
                       v.attr_token("theta", q.quantize("theta", ath)), -1]]
        toks = self.model.decoder.sample(
            hidden[None], self.model.plans[PLAN_LIGHT], self.vocab,
            self.model.token_emb, self._sample_fn(state, scene), forced=forced)[0]
        xyz = tuple(q.dequantize(n, toks[j] - v.attr_offsets[n])
                    for j, n in enumerate(("x", "y", "theta")))
        st = toks[3]
        if st == self._tl_end:
            return "unknown", xyz
        return LIGHT_STATES[v.token_info(st)[1]], xyz

    # ------------------------------------------------------------------
    # full-AR stepping
    # ------------------------------------------------------------------
    def step_full_ar(self, state: SimState) -> Frame:
        events, (cx, cy) = self._window_events(state)
        t_next = state.next_frame_index
        time_next = state.frames[-1].time + FRAME_DT
        fi = t_next
        sp = lambda name: TokenEvent(KIND_SPECIAL, fi, token=self.vocab.special(name))
        events.append(sp("BOS"))

        lights: list[TrafficLightState] = []
        anchors = state.map.traffic_light_anchors
        for ai, (ax, ay, ath) in enumerate(anchors):
            rel = (ax - cx, ay - cy, ath)
            key, _ = light_events(TrafficLightState(ai, "unknown"), rel, self.vocab, fi)
            events.append(key)
            h = self._forward(events, state)[-1]
            name, _ = self._decode_light_state(h, rel, state)
            if name == "unknown" and ai in state.light_states:
                name = state.light_states[ai]
            lt = TrafficLightState(ai, name)
            lights.append(lt)
            events.append(light_events(lt, rel, self.vocab, fi)[1])
        events.append(sp("TL_END"))

        committed: list[AgentState] = []
        live = sorted(state.frames[-1].valid_agents(), key=lambda a: a.agent_id)
        for a in live:
            key, _ = agent_events(a, self.vocab, fi)
            events.append(key)
            h = self._forward(events, state)[-1]
            chunk = self._decode_tracked(h[None], state)[0]
            agg = state.aggregators.setdefault(
                a.agent_id, ChunkAggregator(self.H, self.gamma_agg))
            world_poses = chunk["poses"] + np.array([cx, cy, 0.0])
            agg.push(t_next - 1, world_poses)
            if self._is_sentinel(chunk["bins0"]):
                ghost = self._committed_agent(a.agent_id, a.agent_class, chunk,
                                              tuple(chunk["poses"][0]))
                events.append(agent_events(ghost, self.vocab, fi)[1])
                state.aggregators.pop(a.agent_id, None)
                continue
            pose = agg.aggregate(t_next)
            new_a = self._committed_agent(a.agent_id, a.agent_class, chunk, pose)
            committed.append(new_a)
            events.append(agent_events(self._translate_frame(
                Frame(0.0, [], [new_a]), -cx, -cy).agents[0], self.vocab, fi)[1])
        events.append(sp("NEWBORN_BEGIN"))

        committed += self._decode_newborns(events, state, (cx, cy), t_next,
                                           used={a.agent_id for a in live} |
                                                {a.agent_id for a in committed})
        committed.sort(key=lambda a: a.agent_id)
        frame = Frame(time_next, lights, committed)
        self._commit(state, frame)
        return frame

    # ------------------------------------------------------------------
    # partial-AR stepping
    # ------------------------------------------------------------------
    def step_partial_ar(self, state: SimState, ego_override: AgentState | None = None
                        ) -> Frame:
        if ego_override is not None and ego_override.agent_id != 0:
            raise ValueError("ego override must have agent id 0")
        events, (cx, cy) = self._window_events(state)
        t_next = state.next_frame_index
        time_next = state.frames[-1].time + FRAME_DT
        fi_last = t_next - 1
        live = sorted(state.frames[-1].valid_agents(), key=lambda a: a.agent_id)

        # pass 1: chunks for every live agent from the committed window
        h1 = self._forward(events, state)
        key_pos = [i for i, e in enumerate(events)
                   if e.kind == KIND_KEY and not e.is_light and e.frame_index == fi_last]
        assert len(key_pos) == len(live)
        # window sections order tracked keys before newborn keys; pair by id
        by_id = {a.agent_id: a for a in live}
        key_agents = [by_id[events[i].obj] for i in key_pos]
        surrogates: dict[int, AgentState] = {}
        if live:
            chunks1 = self._decode_tracked(h1[key_pos], state)
            for a, ch in zip(key_agents, chunks1):
                if self.H >= 2:
                    p0, p1 = ch["poses"][0], ch["poses"][1]
                    vx, vy = (p1[0] - p0[0]) / FRAME_DT, (p1[1] - p0[1]) / FRAME_DT
                    surrogates[a.agent_id] = AgentState(
                        a.agent_id, a.agent_class, p1[0] + cx, p1[1] + cy, p1[2],
                        vx, vy, ch["w"], ch["l"])
                else:
                    surrogates[a.agent_id] = a
        if ego_override is not None and 0 in surrogates:
            surrogates[0] = ego_override

        # surrogate section for frame t+1
        fi = t_next
        sp = lambda name: TokenEvent(KIND_SPECIAL, fi, token=self.vocab.special(name))
        section: list[TokenEvent] = [sp("BOS")]
        anchors = state.map.traffic_light_anchors
        light_key_pos: list[int] = []
        for ai, (ax, ay, ath) in enumerate(anchors):
            rel = (ax - cx, ay - cy, ath)
            carry = state.light_states.get(ai, "unknown")
            k, val = light_events(TrafficLightState(ai, carry), rel, self.vocab, fi)
            light_key_pos.append(len(events) + len(section))
            section += [k, val]
        section.append(sp("TL_END"))
        agent_key_pos: list[int] = []
        for a in live:
            sur = self._translate_frame(Frame(0.0, [], [surrogates[a.agent_id]]),
                                        -cx, -cy).agents[0]
            k, val = agent_events(sur, self.vocab, fi)
            agent_key_pos.append(len(events) + len(section))
            section += [k, val]
        section.append(sp("NEWBORN_BEGIN"))
        events2 = events + section

        # pass 2: one forward compensates intra-frame dependencies
        h2 = self._forward(events2, state)
        lights = []
        for ai, pos in enumerate(light_key_pos):
            ax, ay, ath = anchors[ai]
            name, _ = self._decode_light_state(h2[pos], (ax - cx, ay - cy, ath), state)
            if name == "unknown" and ai in state.light_states:
                name = state.light_states[ai]
            lights.append(TrafficLightState(ai, name))

        committed: list[AgentState] = []
        if live:
            chunks2 = self._decode_tracked(h2[agent_key_pos], state)
            for a, ch in zip(live, chunks2):
                if ego_override is not None and a.agent_id == 0:
                    committed.append(copy.deepcopy(ego_override))
                    state.aggregators.pop(0, None)
                    continue
                agg = state.aggregators.setdefault(
                    a.agent_id, ChunkAggregator(self.H, self.gamma_agg))
                agg.push(t_next - 1, ch["poses"] + np.array([cx, cy, 0.0]))
                if self._is_sentinel(ch["bins0"]):
                    state.aggregators.pop(a.agent_id, None)
                    continue
                committed.append(self._committed_agent(
                    a.agent_id, a.agent_class, ch, agg.aggregate(t_next)))

        committed += self._decode_newborns(
            events2, state, (cx, cy), t_next,
            used={a.agent_id for a in live} | {a.agent_id for a in committed},
            first_hidden=h2[-1])
        committed.sort(key=lambda a: a.agent_id)
        frame = Frame(time_next, lights, committed)
        self._commit(state, frame)
        return frame

    # ------------------------------------------------------------------
    # newborn decoding (shared, always full-AR)
    # ------------------------------------------------------------------
    def _decode_newborns(self, events: list[TokenEvent], state: SimState,
                         center, t_next: int, used: set,
                         first_hidden: torch.Tensor | None = None,
                         census: int | None = None, scene: bool = False
                         ) -> list[AgentState]:
        cx, cy = center
        out: list[AgentState] = []
        fi = t_next
        budget = self.max_newborn if census is None else census
        while budget > 0 and len(used) < min(self.vocab.n_agent_ids, MAX_AGENTS):
            if first_hidden is not None:
                h = first_hidden
                first_hidden = None
            else:
                h = self._forward(events, state)[-1]
            toks = self.model.decoder.sample(
                h[None], self.model.plans[PLAN_GENERATIVE], self.vocab,
                self.model.token_emb, self._sample_fn(state, scene),
                used_ids=frozenset(used), stop_tokens=(self._frame_end,))[0]
            if toks[0] == self._frame_end:
                break
            agent_id = self.vocab.token_info(toks[0])[1]
            agent_class = CLASSES[self.vocab.token_info(toks[1])[1]]
            chunk = self._parse_chunk(toks[2:])
            pose0 = chunk["poses"][0] + np.array([cx, cy, 0.0])
            agent = self._committed_agent(agent_id, agent_class, chunk, tuple(pose0))
            agg = ChunkAggregator(self.H, self.gamma_agg)
            agg.push(t_next - 1, chunk["poses"] + np.array([cx, cy, 0.0]))
            state.aggregators[agent_id] = agg
            out.append(agent)
            used.add(agent_id)
            budget -= 1
            rel = self._translate_frame(Frame(0.0, [], [agent]), -cx, -cy).agents[0]
            events += agent_events(rel, self.vocab, fi)
        return out

    def _commit(self, state: SimState, frame: Frame) -> None:
        state.frames.append(frame)
        for lt in frame.lights:
            state.light_states[lt.anchor] = lt.state
        for agent_id in list(state.aggregators):
            if frame.agent_by_id(agent_id) is None:
                state.aggregators.pop(agent_id)
        state._raster_cache = None

    # ------------------------------------------------------------------
    # scene generation (full-AR over an empty frame)
    # ------------------------------------------------------------------
    def scene_generate(self, map_model: MapModel, prompt: list[str], census: int,
                       seed: int) -> Frame:
        if census > MAX_AGENTS:
            raise ValueError(f"census {census} exceeds {MAX_AGENTS}")
        state = SimState(map=map_model, frames=[], rng=np.random.default_rng(
            np.random.Philox(key=seed)))
        anchors = map_model.traffic_light_anchors
        empty = Frame(0.0, [TrafficLightState(i, "unknown") for i in range(len(anchors))], [])
        state.frames = [empty]     # raster context only; not part of the token window
        state.center = (0.0, 0.0)
        state._raster_cache = (1, rasterize(map_model, empty, (0.0, 0.0, 0.0),
                                            self.raster_cfg))

        events: list[TokenEvent] = []
        for tag in dict.fromkeys(prompt):
            events.append(TokenEvent(KIND_SPECIAL, 0, token=self.vocab.prompt_token(tag)))
        sp = lambda name: TokenEvent(KIND_SPECIAL, 0, token=self.vocab.special(name))
        events.append(sp("BOS"))
        lights: list[TrafficLightState] = []
        for ai, (ax, ay, ath) in enumerate(anchors):
            key, _ = light_events(TrafficLightState(ai, "unknown"), (ax, ay, ath),
                                   self.vocab, 0)
            events.append(key)
            h = self._forward(events, state)[-1]
            name, xyz = self._decode_light_state(h, (ax, ay, ath), state, scene=True)
            lt = TrafficLightState(ai, name)
            lights.append(lt)
            events.append(light_events(lt, xyz, self.vocab, 0)[1])
        events.append(sp("TL_END"))
        events.append(sp("NEWBORN_BEGIN"))
        agents = []
        if census > 0:
            agents = self._decode_newborns(events, state, (0.0, 0.0), 0, used=set(),
                                           census=census, scene=True)
        agents.sort(key=lambda a: a.agent_id)
        return Frame(0.0, lights, agents)

    # ------------------------------------------------------------------
    # batched rollouts
    # ------------------------------------------------------------------
    def rollout_batch(self, log: ScenarioLog, policies: list | None,
                      horizon_s: float, n_rollouts: int, base_seed: int = 0,
                      mode: str = MODE_PARTIAL_AR, start_t: int | None = None,
                      workers: int = 1) -> RolloutBatch:
        if horizon_s <= 0:
            raise ValueError("horizon must be positive")
        n_steps = horizon_s / FRAME_DT
        if abs(n_steps - round(n_steps)) > 1e-9:
            raise ValueError("horizon must be a multiple of 0.5 s")
        n_steps = int(round(n_steps))
        start_t = self.cl - 1 if start_t is None else start_t
        if start_t >= len(log.frames):
            raise ValueError("start index beyond the log")
        cond_lo = max(0, start_t - self.cl + 1)
        conditioning = log.frames[cond_lo: start_t + 1]
        policy_list = list(policies) if policies else [None]
        if mode == MODE_FULL_AR and policies:
            raise ValueError("policies require partial-AR mode (ego override)")

        def run(i: int, k: int) -> tuple[int, ScenarioLog]:
            seed = base_seed * 1_000_003 + i * 4099 + k * 17 + 1
            state = self.make_state(log.map, conditioning, seed)
            policy = policy_list[i]
            for _ in range(n_steps):
                if policy is not None:
                    override = policy.act(state.frames, log.map)
                    self.step_partial_ar(state, ego_override=override)
                elif mode == MODE_PARTIAL_AR:
                    self.step_partial_ar(state)
                else:
                    self.step_full_ar(state)
            return seed, ScenarioLog(map=log.map, prompt=list(log.prompt),
                                     frames=state.frames, seed=seed)

        jobs = [(i, k) for i in range(len(policy_list)) for k in range(n_rollouts)]
        results: dict[tuple[int, int], tuple[int, ScenarioLog]] = {}
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                futs = {ex.submit(run, i, k): (i, k) for i, k in jobs}
                for fut, key in futs.items():
                    results[key] = fut.result()
        else:
            for i, k in jobs:
                results[(i, k)] = run(i, k)
        seeds = [[results[(i, k)][0] for k in range(n_rollouts)]
                 for i in range(len(policy_list))]
        logs = [[results[(i, k)][1] for k in range(n_rollouts)]
                for i in range(len(policy_list))]
        names = [getattr(p, "name", "none") for p in policy_list]
        return RolloutBatch(source=log, start_t=start_t, horizon_s=horizon_s,
                            mode=mode, policy_names=names, seeds=seeds, logs=logs)
