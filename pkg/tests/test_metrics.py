import math

import numpy as np
import pytest

from trafficworld.metrics import (RealismConfig, RewardConfig, SKIP,
                                  argmax_policy, component_likelihood,
                                  composite_realism, compute_features,
                                  displacement_metrics, estimate_value,
                                  mmd2, nuplan_score, realism_suite, rl_score,
                                  scene_gen_mmd, FEATURE_NAMES)
from trafficworld.synthworld import (AgentState, Frame, generate_map,
                                     script_scenario)


def brute_force_mmd2(p, q, sigma):
    p, q = np.atleast_2d(p), np.atleast_2d(q)
    k = lambda a, b: math.exp(-float(((a - b) ** 2).sum()) / (2 * sigma ** 2))
    t1 = sum(k(a, b) for a in p for b in p) / (len(p) ** 2)
    t2 = sum(k(a, b) for a in q for b in q) / (len(q) ** 2)
    t3 = sum(k(a, b) for a in p for b in q) / (len(p) * len(q))
    return t1 + t2 - 2 * t3


class TestMmd:
    def test_identical_sets_zero(self):
        x = np.random.default_rng(0).normal(size=(20, 2))
        assert abs(mmd2(x, x.copy(), sigma=1.5)) <= 1e-12

    def test_two_point_closed_form(self):
        sigma = 1.3
        d = math.sqrt(2 * sigma * sigma * math.log(2))
        val = mmd2(np.array([[0.0]]), np.array([[d]]), sigma)
        assert val == pytest.approx(1.0, abs=1e-9)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        p = rng.normal(size=(40, 2))
        q = rng.normal(loc=0.5, size=(30, 2))
        assert mmd2(p, q, 2.0) == pytest.approx(brute_force_mmd2(p, q, 2.0), abs=1e-9)

    def test_sigma_validation(self):
        with pytest.raises(ValueError):
            mmd2(np.zeros((2, 1)), np.zeros((2, 1)), 0.0)


def _vehicle(i, x, y, th=0.0, vx=5.0, vy=0.0, cls="vehicle"):
    return AgentState(i, cls, x, y, th, vx, vy, 2.0, 4.5)


class TestSceneGenMmd:
    def test_identical_frames(self):
        fr = Frame(0.0, [], [_vehicle(i, 3.0 * i, 0.0) for i in range(6)])
        out = scene_gen_mmd(fr, fr)
        for k in ("position", "heading", "velocity", "size"):
            assert abs(out[k]) <= 1e-12

    def test_position_shift_only_moves_position(self):
        ref = Frame(0.0, [], [_vehicle(i, 3.0 * i, 0.0) for i in range(6)])
        gen = Frame(0.0, [], [_vehicle(i, 3.0 * i + 10.0, 0.0) for i in range(6)])
        out_ref = scene_gen_mmd(ref, ref)
        out = scene_gen_mmd(gen, ref)
        assert out["position"] > out_ref["position"]
        assert out["size"] == pytest.approx(0.0, abs=1e-12)

    def test_matches_per_attribute_oracle(self):
        gen = Frame(0.0, [], [_vehicle(0, 1.0, 2.0, 0.3), _vehicle(1, -4.0, 7.0, -0.2)])
        ref = Frame(0.0, [], [_vehicle(0, 0.0, 0.0, 0.1), _vehicle(1, 5.0, -3.0, 0.6)])
        out = scene_gen_mmd(gen, ref)
        from trafficworld.metrics import DEFAULT_BANDWIDTHS as BW
        g = np.array([[1.0, 2.0], [-4.0, 7.0]])
        r = np.array([[0.0, 0.0], [5.0, -3.0]])
        assert out["position"] == pytest.approx(brute_force_mmd2(g, r, BW["position"]), abs=1e-9)

    def test_filter_skip_marker(self):
        peds = Frame(0.0, [], [AgentState(0, "pedestrian", 0, 0, 0, 1, 0, 0.6, 0.6)])
        ref = Frame(0.0, [], [_vehicle(0, 0.0, 0.0)])
        assert scene_gen_mmd(peds, ref) == SKIP

    def test_range_filter(self):
        near = Frame(0.0, [], [_vehicle(0, 10.0, 0.0)])
        far = Frame(0.0, [], [_vehicle(0, 10.0, 0.0), _vehicle(1, 80.0, 0.0)])
        out = scene_gen_mmd(far, near)   # the 80 m vehicle is filtered out
        assert abs(out["position"]) <= 1e-12


@pytest.fixture(scope="module")
def scripted():
    m = generate_map(61)
    return m, script_scenario(m, 8, 2, 16, seed=3)


class TestFeatures:
    def test_stationary_agent(self, scripted):
        m, _ = scripted
        still = [Frame(0.5 * i, [], [_vehicle(0, 5.0, 1.0, vx=0.0, vy=0.0)])
                 for i in range(4)]
        tab = compute_features(still, m)
        assert tab.values["linear_speed"][0, 2] == 0.0
        assert tab.values["angular_speed"][0, 2] == 0.0

    def test_ttc_worked_example(self, scripted):
        m, _ = scripted
        frames = [Frame(0.5 * i, [],
                        [_vehicle(0, 10.0 * 0.5 * i, 0.0, vx=10.0),
                         _vehicle(1, 34.5 + 5.0 * 0.5 * i, 0.0, vx=5.0)])
                  for i in range(3)]
        tab = compute_features(frames, m)
        # follower gap = 34.5 - (4.5/2 + 4.5/2) = 30 m, closing 5 m/s -> 6 s
        assert tab.values["ttc"][0, 0] == pytest.approx(6.0, abs=1e-9)

    def test_collision_and_distance_signs(self, scripted):
        m, _ = scripted
        def sq(i, x):
            return AgentState(i, "vehicle", x, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0)
        apart = [Frame(0.5 * i, [], [sq(0, 0.0), sq(1, 3.0)]) for i in range(3)]
        tab = compute_features(apart, m)
        assert tab.values["collision"][0, 0] == 0.0
        assert tab.values["dist_to_nearest"][0, 0] == pytest.approx(2.0)
        touching = [Frame(0.5 * i, [], [sq(0, 0.0), sq(1, 0.5)]) for i in range(3)]
        tab2 = compute_features(touching, m)
        assert tab2.values["collision"][0, 0] == 1.0
        assert tab2.values["dist_to_nearest"][0, 0] < 0

    def test_scripted_features_complete(self, scripted):
        m, log = scripted
        tab = compute_features(log.frames, m)
        assert set(tab.values) == set(FEATURE_NAMES)
        assert tab.valid["linear_speed"].any()

    def test_too_few_frames(self, scripted):
        m, log = scripted
        with pytest.raises(ValueError):
            compute_features(log.frames[:2], m)


class TestComponentLikelihood:
    def test_certain_bin_gives_one(self):
        edges = np.linspace(0, 10, 11)
        rollouts = np.full((8, 1, 3), 4.2)
        gt = np.full((1, 3), 4.3)  # same bin
        m = component_likelihood(rollouts, gt, np.ones((1, 3), bool), edges,
                                 smoothing=0.0)
        assert m == pytest.approx(1.0)

    def test_uniform_four_bins(self):
        edges = np.linspace(0, 4, 5)
        rollouts = np.array([0.5, 1.5, 2.5, 3.5]).reshape(4, 1, 1)
        gt = np.array([[1.6]])
        m = component_likelihood(rollouts, gt, np.ones((1, 1), bool), edges)
        assert m == pytest.approx(0.25, abs=1e-12)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        edges = np.linspace(0, 1, 6)
        r = rng.random((6, 2, 3))
        gt = rng.random((2, 3))
        v = np.ones((2, 3), bool)
        m1 = component_likelihood(r, gt, v, edges)
        m2 = component_likelihood(r[::-1], gt, v, edges)
        assert m1 == pytest.approx(m2, abs=1e-15)

    def test_all_invalid_rejected(self):
        with pytest.raises(ValueError):
            component_likelihood(np.zeros((2, 1)), np.zeros(1), np.zeros(1, bool),
                                 np.linspace(0, 1, 3))

    def test_in_unit_interval_and_monotone(self):
        edges = np.linspace(0, 10, 11)
        gt = np.array([[5.5]])
        v = np.ones((1, 1), bool)
        spread = np.array([1.0, 3.0, 5.5, 8.0]).reshape(4, 1, 1)
        concentrated = np.array([5.2, 5.4, 5.6, 5.6]).reshape(4, 1, 1)
        m1 = component_likelihood(spread, gt, v, edges)
        m2 = component_likelihood(concentrated, gt, v, edges)
        assert 0 < m1 <= 1 and 0 < m2 <= 1
        assert m2 >= m1


class TestCompositeRealism:
    def test_all_ones(self):
        cats, meta = composite_realism({n: 1.0 for n in FEATURE_NAMES})
        assert meta == 1.0
        assert all(v == 1.0 for v in cats.values())

    def test_single_component(self):
        scores = {n: 0.0 for n in FEATURE_NAMES}
        scores["linear_speed"] = 1.0
        _, meta = composite_realism(scores)
        assert meta == pytest.approx(1.0 / 9.0)

    def test_weight_scaling_invariance(self):
        rng = np.random.default_rng(2)
        scores = {n: float(rng.random()) for n in FEATURE_NAMES}
        cfg1 = RealismConfig()
        cfg2 = RealismConfig(weights={n: 3.7 for n in FEATURE_NAMES})
        _, m1 = composite_realism(scores, cfg1)
        _, m2 = composite_realism(scores, cfg2)
        assert m1 == pytest.approx(m2, abs=1e-12)

    def test_suite_runs_on_scripted(self, scripted):
        m, log = scripted
        rollouts = [log.frames[:8], log.frames[:8]]
        comps, cats, meta = realism_suite(rollouts, log.frames[:8], m)
        assert 0 < meta <= 1
        assert set(cats) == {"kinematic", "interactive", "map_based"}


class TestDisplacement:
    def _gt(self, n=5):
        return [Frame(0.5 * i, [], [_vehicle(0, 2.0 * i, 0.0)]) for i in range(n)]

    def test_exact_rollout_zero(self):
        gt = self._gt()
        out = displacement_metrics([gt], gt)
        assert out == {"minADE": 0.0, "minFDE": 0.0, "miss_rate": 0.0}

    def test_constant_offsets(self):
        gt = self._gt()
        off1 = [Frame(f.time, [], [_vehicle(0, a.x, a.y + 1.0)
                                   for a in f.agents]) for f in gt]
        off2 = [Frame(f.time, [], [_vehicle(0, a.x, a.y + 2.0)
                                   for a in f.agents]) for f in gt]
        out = displacement_metrics([off1, off2], gt)
        assert out["minADE"] == pytest.approx(1.0)
        assert out["minFDE"] == pytest.approx(1.0)
        assert out["miss_rate"] == 0.0

    def test_adding_worse_rollout_never_hurts(self):
        gt = self._gt()
        good = [Frame(f.time, [], [_vehicle(0, a.x + 0.5, a.y)
                                   for a in f.agents]) for f in gt]
        bad = [Frame(f.time, [], [_vehicle(0, a.x + 9.0, a.y)
                                  for a in f.agents]) for f in gt]
        base = displacement_metrics([good], gt)["minADE"]
        more = displacement_metrics([good, bad], gt)["minADE"]
        assert more <= base

    def test_translation_invariance(self):
        gt = self._gt()
        roll = [Frame(f.time, [], [_vehicle(0, a.x + 1.5, a.y)
                                   for a in f.agents]) for f in gt]
        out1 = displacement_metrics([roll], gt)
        shift = 100.0
        gt2 = [Frame(f.time, [], [_vehicle(0, a.x + shift, a.y + shift)
                                  for a in f.agents]) for f in gt]
        roll2 = [Frame(f.time, [], [_vehicle(0, a.x + shift, a.y + shift)
                                    for a in f.agents]) for f in roll]
        out2 = displacement_metrics([roll2], gt2)
        assert out1["minADE"] == pytest.approx(out2["minADE"], abs=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            displacement_metrics([], self._gt())


class TestPlanScore:
    def test_phi_worked_example(self):
        w = RewardConfig().weights
        phi = {"driving_direction": 1.0, "ttc": 1.0, "speed_limit": 1.0,
               "progress": 0.5, "comfort": 1.0}
        weighted = sum(w[k] * phi[k] for k in phi) / sum(w.values())
        assert weighted == pytest.approx(18.5 / 21.0, abs=1e-9)

    def test_flawless_rollout_scores_one(self, scripted):
        # constant-speed ego along the route: comfortable, on-road, obeys the
        # limit, and equals its own expert -> exactly 1.0
        m, _ = scripted
        from trafficworld.geometry import point_on_polyline
        route = m.route_polyline()
        v = min(l.speed_limit for l in m.lanes) * 0.8
        frames = []
        for i in range(17):
            x, y, th = point_on_polyline(route, 5.0 + v * 0.5 * i)
            frames.append(Frame(0.5 * i, [], [AgentState(
                0, "vehicle", x, y, th, v * math.cos(th), v * math.sin(th),
                2.0, 4.5)]))
        rep = nuplan_score(frames, m, RewardConfig(), expert=frames)
        assert rep.composite == pytest.approx(1.0, abs=1e-9)

    def test_vru_collision_gates_zero(self, scripted):
        m, log = scripted
        frames = []
        for i in range(9):
            ego = _vehicle(0, 1.0 * i, 0.0, vx=2.0)
            ped = AgentState(7, "pedestrian", 4.0, 0.0, 0.0, 0.0, 0.0, 0.6, 0.6)
            frames.append(Frame(0.5 * i, [], [ego, ped]))
        rep = nuplan_score(frames, m, RewardConfig(), expert=log.frames)
        assert rep.composite == 0.0

    def test_struck_while_stopped_not_at_fault(self, scripted):
        m, log = scripted
        frames = []
        for i in range(9):
            ego = _vehicle(0, 20.0, 0.0, vx=0.0)
            rear = _vehicle(3, 12.0 + 1.2 * i, 0.0, vx=2.4)
            frames.append(Frame(0.5 * i, [], [ego, rear]))
        rep = nuplan_score(frames, m, RewardConfig(), expert=None)
        assert rep.metrics["gate_no_at_fault_collision"] == 1.0


class TestRlScore:
    def test_collision_zero(self, scripted):
        m, _ = scripted
        frames = [Frame(0.5 * i, [], [_vehicle(0, 0.2 * i, 0.0, vx=0.4),
                                      _vehicle(1, 1.0, 0.0, vx=0.0)])
                  for i in range(5)]
        rep = rl_score(frames, m, RewardConfig())
        assert rep.composite == 0.0

    def test_progress_31m_worked_example(self, scripted):
        m, _ = scripted
        cfg = RewardConfig()
        from trafficworld.metrics.planscore import _route_progress, _comfort_ok
        # synthetic report math: progress 31 m, comfortable, clean
        progress = max(0.0, min(1.0, 31.0 / cfg.rl_progress_norm_m))
        assert (progress + 1.0) / 2.0 == pytest.approx(0.75, abs=1e-9)
        full = max(0.0, min(1.0, 62.0 / cfg.rl_progress_norm_m))
        assert (full + 1.0) / 2.0 == pytest.approx(1.0, abs=1e-9)

    def test_rl_score_on_scripted_expert(self, scripted):
        m, log = scripted
        rep = rl_score(log.frames, m, RewardConfig())
        assert 0.0 <= rep.composite <= 1.0


class TestValueEstimation:
    def test_constant(self):
        assert estimate_value([1.0, 1.0, 1.0]) == 1.0

    def test_mean_example(self):
        assert estimate_value([0.5, 0.7, 0.9, 0.9]) == pytest.approx(0.75)

    def test_argmax_with_ties(self):
        assert argmax_policy([0.2, 0.8]) == 1
        assert argmax_policy([0.5, 0.9, 0.9]) == 1

    def test_argmax_scale_invariant(self):
        vals = [0.1, 0.7, 0.3]
        scaled = [3.0 * v for v in vals]
        assert argmax_policy(vals) == argmax_policy(scaled)
