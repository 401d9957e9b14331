import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trafficworld.synthworld import (AgentState, Frame, TrafficLightState,
                                     generate_map, script_scenario)
from trafficworld.tokenizer import (ATTR_ORDER, QuantSpec, SlotDescriptor,
                                    Vocabulary, build_window, decode_frame,
                                    encode_frame, logical_event_count,
                                    stored_velocity, valid_mask,
                                    FrameParseError, KIND_KEY, KIND_SPECIAL,
                                    KIND_VALUE, SLOT_ATTR, SLOT_LIGHT_STATE,
                                    SLOT_NEWBORN_CLASS, SLOT_NEWBORN_KEY,
                                    SLOT_TRACKED_KEY)

Q = QuantSpec.default()
V = Vocabulary()


class TestQuant:
    def test_bin_counts_match_defaults(self):
        assert Q.counts() == {"x": 1000, "y": 1000, "theta": 200,
                              "w": 14, "l": 30, "v_x": 100, "v_y": 100}

    def test_x_zero_is_bin_500(self):
        assert Q.quantize("x", 0.0) == 500

    def test_theta_lower_boundary(self):
        assert Q.quantize("theta", -math.pi) == 0

    def test_w_clamped_to_top_bin(self):
        assert Q.quantize("w", 7.0) == 13

    def test_dequantize_centers(self):
        assert Q.dequantize("x", 500) == pytest.approx(0.1, abs=1e-12)
        assert Q.dequantize("theta", 0) == pytest.approx(-math.pi + math.pi / 200, abs=1e-12)

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            Q.quantize("x", float("nan"))

    def test_out_of_range_bin_rejected(self):
        with pytest.raises(ValueError):
            Q.dequantize("w", 14)

    @pytest.mark.parametrize("attr", ATTR_ORDER)
    def test_fixed_point(self, attr):
        for k in range(Q.attr(attr).count):
            assert Q.quantize(attr, Q.dequantize(attr, k)) == k

    @given(st.sampled_from(ATTR_ORDER), st.floats(0, 1))
    @settings(max_examples=300, deadline=None)
    def test_round_trip_bound(self, attr, u):
        a = Q.attr(attr)
        v = a.lo + u * (a.hi - a.lo)
        err = abs(Q.dequantize(attr, Q.quantize(attr, v)) - v)
        assert err <= a.step / 2 + 1e-9


class TestVocabulary:
    def test_layout_offsets(self):
        assert V.ids_offset == 16
        assert V.lights_offset == 144
        assert V.prompts_offset == 148
        assert V.attr_offsets["x"] == 160
        assert V.size == 2604

    def test_token_bijection(self):
        seen = 0
        for t in range(V.size):
            try:
                kind, idx = V.token_info(t)
            except ValueError:
                continue  # reserved slot
            seen += 1
            if kind == "special":
                from trafficworld.tokenizer import SPECIALS
                assert V.special(SPECIALS[idx]) == t
            elif kind == "class":
                from trafficworld.tokenizer import CLASSES
                assert V.class_token(CLASSES[idx]) == t
            elif kind == "agent_id":
                assert V.agent_id_token(idx) == t
            elif kind == "light_state":
                from trafficworld.synthworld import LIGHT_STATES
                assert V.light_state_token(LIGHT_STATES[idx]) == t
            elif kind == "prompt":
                assert V.prompt_token(V.prompt_tags[idx]) == t
            else:
                assert V.attr_token(kind, idx) == t
        assert seen == V.size - 7  # 3 reserved specials + 4 reserved classes

    def test_ranges_disjoint_contiguous(self):
        starts = sorted([0, 8, V.ids_offset, V.lights_offset, V.prompts_offset]
                        + list(V.attr_offsets.values()))
        assert starts == sorted(set(starts))
        assert V.attr_offsets["v_y"] + Q.attr("v_y").count == V.size

    def test_dump_contains_size(self):
        assert "2604" in V.dump()


def _agent(i, cls="vehicle", **kw):
    d = dict(x=1.0, y=2.0, theta=0.3, v_x=5.0, v_y=0.5, w=2.0, l=4.5)
    d.update(kw)
    return AgentState(i, cls, d["x"], d["y"], d["theta"], d["v_x"], d["v_y"],
                      d["w"], d["l"])


ANCHORS = [(5.0, 5.0, 0.0), (-5.0, 5.0, 1.5)]


class TestEncodeFrame:
    def test_empty_frame(self):
        ev = encode_frame(Frame(0.0, [], []), None, V, ANCHORS)
        assert [e.kind for e in ev] == [KIND_SPECIAL] * 4
        assert logical_event_count(ev) == 4

    def test_example_counts(self):
        # 2 lights + ego only, no previous frame -> 7 logical events
        fr = Frame(0.0, [TrafficLightState(0, "green"), TrafficLightState(1, "red")],
                   [_agent(0)])
        ev = encode_frame(fr, None, V, ANCHORS)
        assert logical_event_count(ev) == 7
        assert len(ev) == 10  # 4 specials + 3 pairs

    def test_tracked_vs_newborn(self):
        prev = Frame(0.0, [], [_agent(0), _agent(3)])
        cur = Frame(0.5, [], [_agent(0), _agent(2), _agent(3)])
        ev = encode_frame(cur, prev, V, ANCHORS)
        keys = [e for e in ev if e.kind == KIND_KEY]
        nb = ev.index(next(e for e in ev if e.kind == KIND_SPECIAL
                           and e.token == V.special("NEWBORN_BEGIN")))
        tracked = [e.obj for e in ev[:nb] if e.kind == KIND_KEY]
        newborn = [e.obj for e in ev[nb:] if e.kind == KIND_KEY]
        assert tracked == [0, 3]
        assert newborn == [2]
        assert len(keys) == 3

    def test_duplicate_ids_rejected(self):
        fr = Frame(0.0, [], [])
        fr.agents = [_agent(1), _agent(1)]
        with pytest.raises(Exception):
            encode_frame(fr, None, V, ANCHORS)


@pytest.fixture(scope="module")
def log():
    m = generate_map(21)
    return script_scenario(m, 10, 2, 12, seed=9)


class TestWindow:

    def test_counting_oracle(self):
        # 3 frames x (2 lights + 10 agents): 48 key/special + 36 value positions
        lights = [TrafficLightState(0, "green"), TrafficLightState(1, "red")]
        frames = [Frame(0.5 * i, lights, [_agent(j) for j in range(10)]) for i in range(4)]
        from trafficworld.synthworld.types import MapModel
        import numpy as np
        m = MapModel(lanes=[], drivable_region=[], crosswalks=[],
                     traffic_light_anchors=ANCHORS, route=[],
                     extent=(-10, -10, 10, 10))
        from trafficworld.synthworld import ScenarioLog
        log = ScenarioLog(m, [], frames, 0)
        w = build_window(log, 3, condition_length=3, vocab=V)
        n_keyspecial = sum(1 for e in w.events if e.kind != KIND_VALUE)
        n_value = sum(1 for e in w.events if e.kind == KIND_VALUE)
        assert n_keyspecial == 48
        assert n_value == 36

    def test_single_frame_window(self, log):
        w = build_window(log, 0, condition_length=1, vocab=V)
        assert w.first_frame == w.last_frame == 0

    def test_monotone_in_agents(self, log):
        w1 = build_window(log, 2, condition_length=3, vocab=V)
        small = script_scenario(log.map, 3, 0, 12, seed=9)
        w2 = build_window(small, 2, condition_length=3, vocab=V)
        assert len(w1) > len(w2)

    def test_truncation_drops_oldest(self, log):
        full = build_window(log, 4, condition_length=3, vocab=V)
        per_frame = len(full) // 3 + 10
        w = build_window(log, 4, condition_length=3, vocab=V, block_size=2 * per_frame)
        assert w.condition_length < 3
        assert w.last_frame == 4

    def test_out_of_range(self, log):
        with pytest.raises(ValueError):
            build_window(log, 1, condition_length=3, vocab=V)

    def test_grammar(self, log):
        w = build_window(log, 5, condition_length=3, vocab=V)
        # regular grammar check: BOS (pair)* TL_END (pair)* NEWBORN_BEGIN (pair)* FRAME_END
        state = "expect_bos"
        for e in w.events:
            if e.kind == KIND_SPECIAL:
                name = ("BOS", "TL_END", "NEWBORN_BEGIN", "FRAME_END", "PAD")[
                    V.token_info(e.token)[1]]
                if name == "BOS":
                    assert state == "expect_bos"
                    state = "lights"
                elif name == "TL_END":
                    assert state == "lights"
                    state = "tracked"
                elif name == "NEWBORN_BEGIN":
                    assert state == "tracked"
                    state = "newborn"
                elif name == "FRAME_END":
                    assert state == "newborn"
                    state = "expect_bos"
            elif e.kind == KIND_KEY:
                assert state in ("lights", "tracked", "newborn")
        assert state == "expect_bos"


class TestDecode:
    def test_round_trip_scripted_frames(self):
        m = generate_map(22)
        raw = script_scenario(m, 8, 3, 10, seed=4)
        # pipeline contract: scenes are ego-recentered before tokenization
        ego = raw.frames[0].agent_by_id(0)
        log = raw.transformed(translation=(-ego.x, -ego.y))
        anchors = log.map.traffic_light_anchors
        checked = 0
        for fi in (0, 4, 9):
            fr = log.frames[fi]
            prev = log.frames[fi - 1] if fi else None
            ev = encode_frame(fr, prev, V, anchors)
            back = decode_frame(ev, V, time=fr.time)
            assert [a.agent_id for a in back.agents] == [a.agent_id for a in fr.valid_agents()]
            for a, b in zip(fr.valid_agents(), back.agents):
                if max(abs(a.x), abs(a.y)) > 99.0:
                    continue  # out of quantizer range: clamped by design
                q = V.quant
                th_hat = q.dequantize("theta", q.quantize("theta", a.theta))
                lon, lat = stored_velocity(a, th_hat)
                lon_b, lat_b = stored_velocity(b, b.theta)
                for name, got, want in [("x", b.x, a.x), ("y", b.y, a.y),
                                        ("w", b.w, a.w), ("l", b.l, a.l),
                                        ("v_x", lon_b, lon), ("v_y", lat_b, lat)]:
                    assert abs(got - want) <= q.attr(name).step / 2 + 1e-9, name
                assert abs(b.theta - th_hat) < 1e-12
                checked += 1
        assert checked >= 10

    def test_empty_frame_round_trip(self):
        ev = encode_frame(Frame(0.0, [], []), None, V, ANCHORS)
        fr = decode_frame(ev, V)
        assert fr.agents == [] and fr.lights == []

    def test_value_before_key_rejected(self):
        ev = encode_frame(Frame(0.0, [], [_agent(0)]), None, V, ANCHORS)
        # remove the key, keep the value
        bad = [e for e in ev if e.kind != KIND_KEY]
        with pytest.raises(FrameParseError):
            decode_frame(bad, V)

    def test_lights_round_trip(self):
        fr = Frame(0.0, [TrafficLightState(0, "yellow"), TrafficLightState(1, "red")], [])
        ev = encode_frame(fr, None, V, ANCHORS)
        back = decode_frame(ev, V)
        assert [(l.anchor, l.state) for l in back.lights] == [(0, "yellow"), (1, "red")]


class TestMasks:
    def test_attr_mask_x(self):
        m = valid_mask(SlotDescriptor(SLOT_ATTR, attr="x"), V)
        assert len(m) == 1000
        start, count = V.attr_range("x")
        assert m[0] == start and m[-1] == start + count - 1

    def test_tracked_single_live(self):
        m = valid_mask(SlotDescriptor(SLOT_TRACKED_KEY, live_ids=frozenset({7})), V)
        assert list(m) == [V.agent_id_token(7)]

    def test_newborn_exhausted(self):
        m = valid_mask(SlotDescriptor(SLOT_NEWBORN_KEY,
                                      used_ids=frozenset(range(128))), V)
        assert list(m) == [V.special("FRAME_END")]

    def test_light_state_mask(self):
        m = valid_mask(SlotDescriptor(SLOT_LIGHT_STATE), V)
        assert len(m) == 5
        assert V.special("TL_END") in m

    def test_unknown_slot(self):
        with pytest.raises(ValueError):
            valid_mask(SlotDescriptor("bogus"), V)

    @pytest.mark.parametrize("slot,kinds", [
        (SlotDescriptor(SLOT_ATTR, attr="theta"), {"theta"}),
        (SlotDescriptor(SLOT_TRACKED_KEY, live_ids=frozenset({0, 5})), {"agent_id"}),
        (SlotDescriptor(SLOT_NEWBORN_KEY, used_ids=frozenset({0})), {"agent_id", "special"}),
        (SlotDescriptor(SLOT_NEWBORN_CLASS), {"class"}),
        (SlotDescriptor(SLOT_LIGHT_STATE), {"light_state", "special"}),
    ])
    def test_mask_soundness_exhaustive(self, slot, kinds):
        allowed = set(valid_mask(slot, V).tolist())
        for t in range(V.size):
            try:
                kind, idx = V.token_info(t)
            except ValueError:
                assert t not in allowed
                continue
            if t in allowed:
                assert kind in kinds
            elif kind in kinds and kind not in ("agent_id", "special", "class"):
                # every forbidden token of an unconditional kind must differ in kind
                assert slot.kind != SLOT_ATTR or kind != slot.attr


class TestQuantArray:
    @pytest.mark.parametrize("attr", ATTR_ORDER)
    def test_array_matches_scalar(self, attr):
        rng = np.random.default_rng(3)
        a = Q.attr(attr)
        v = rng.uniform(a.lo - 1.0, a.hi + 1.0, size=500)
        arr = Q.quantize_array(attr, v)
        for x, b in zip(v, arr):
            assert Q.quantize(attr, float(x)) == int(b)
        back = Q.dequantize_array(attr, arr)
        for b, val in zip(arr, back):
            assert Q.dequantize(attr, int(b)) == pytest.approx(float(val), abs=0)
