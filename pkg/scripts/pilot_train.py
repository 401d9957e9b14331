"""Pilot: train a small run and probe the acceptance-critical behaviors.

Usage: python3 scripts/pilot_train.py [n_scenarios] [max_steps]
"""
import sys
import functools
print = functools.partial(print, flush=True)
import time
from pathlib import Path

import numpy as np
import torch

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from trafficworld.synthworld import generate_map, script_scenario
from trafficworld.synthworld.types import AgentState, Frame, FRAME_DT
from trafficworld.model import ModelConfig, WorldModel, save_checkpoint
from trafficworld.training import (LossWeights, OptimConfig, train_model,
                                   value_token_marginal_entropy)
from trafficworld.rollout import RolloutEngine, SamplerConfig
from trafficworld.metrics import realism_suite, displacement_metrics, scene_gen_mmd

torch.set_num_threads(1)


def make_corpus(n, seed0, n_frames=40):
    rng = np.random.default_rng(seed0)
    logs = []
    for i in range(n):
        seed = int(rng.integers(0, 2**31))
        m = generate_map(seed)
        nv = int(rng.integers(6, 13))
        np_ = int(rng.integers(0, 5))
        logs.append(script_scenario(m, nv, np_, n_frames, seed=seed))
    return logs


def constant_velocity_rollout(log, start_t, horizon_steps):
    frames = [f for f in log.frames[: start_t + 1]]
    base = log.frames[start_t]
    for k in range(1, horizon_steps + 1):
        agents = []
        for a in base.valid_agents():
            agents.append(AgentState(a.agent_id, a.agent_class,
                                     a.x + a.v_x * FRAME_DT * k,
                                     a.y + a.v_y * FRAME_DT * k,
                                     a.theta, a.v_x, a.v_y, a.w, a.l))
        frames.append(Frame(base.time + FRAME_DT * k, list(base.lights), agents))
    return frames


def main():
    n_scen = int(sys.argv[1]) if len(sys.argv) > 1 else 60
    max_steps = int(sys.argv[2]) if len(sys.argv) > 2 else 1500
    t0 = time.time()
    corpus = make_corpus(n_scen, seed0=1)
    holdout = make_corpus(6, seed0=777)
    print(f"corpus built in {time.time()-t0:.0f}s")

    cfg = ModelConfig.desk()
    H_ent = value_token_marginal_entropy(corpus[:40], cfg)
    print(f"value-token marginal entropy baseline: {H_ent:.4f} nats")

    ocfg = OptimConfig(max_steps=max_steps, batch_size=8, data_workers=4)
    t0 = time.time()
    model, rep = train_model(corpus, cfg, LossWeights(), ocfg, seed=0)
    dt = time.time() - t0
    print(f"trained {rep.steps[-1]} steps in {dt:.0f}s "
          f"({dt/rep.steps[-1]*1000:.0f} ms/step)")
    print(f"CE value curve: start {rep.ce_value[0]:.3f} end {rep.ce_value[-1]:.3f} "
          f"(target < {0.7*H_ent:.3f})")
    save_checkpoint(model, "/tmp/pilot_model.npz")

    engine = RolloutEngine(model, sampler=SamplerConfig())
    horizon = 8.0
    T = int(horizon / FRAME_DT)
    metas_model, metas_cv, ade_model, ade_cv = [], [], [], []
    t0 = time.time()
    for log in holdout[:4]:
        start = engine.cl - 1
        batch = engine.rollout_batch(log, None, horizon, 8, base_seed=3, workers=4)
        gt = log.frames[start: start + T + 1]
        rolls = [lg.frames[start: start + T + 1] for lg in batch.flat_logs()]
        comps, cats, meta = realism_suite(rolls, gt, log.map)
        disp = displacement_metrics(rolls, gt)
        cv = [constant_velocity_rollout(log, start, T)[start:] for _ in range(8)]
        comps_cv, _, meta_cv = realism_suite(cv, gt, log.map)
        disp_cv = displacement_metrics(cv, gt)
        metas_model.append(meta); metas_cv.append(meta_cv)
        ade_model.append(disp["minADE"]); ade_cv.append(disp_cv["minADE"])
        print(f"  scenario: model meta {meta:.3f} vs CV {meta_cv:.3f} | "
              f"minADE {disp['minADE']:.2f} vs CV {disp_cv['minADE']:.2f}")
    print(f"rollout eval took {time.time()-t0:.0f}s")
    print(f"MEAN: model meta {np.mean(metas_model):.4f} vs CV {np.mean(metas_cv):.4f}; "
          f"model ADE {np.mean(ade_model):.3f} vs CV {np.mean(ade_cv):.3f}")

    # scene generation vs uniform baseline
    rng = np.random.default_rng(0)
    mmd_gen, mmd_rand = [], []
    for log in holdout[:4]:
        ego = log.frames[0].agent_by_id(0)
        rec = log.transformed(translation=(-ego.x, -ego.y))
        ref = rec.frames[0]
        census = len(ref.valid_agents())
        gen = engine.scene_generate(rec.map, rec.prompt, census, seed=11)
        out = scene_gen_mmd(gen, ref)
        agents = []
        for i in range(census):
            th = rng.uniform(-np.pi, np.pi)
            sp = rng.uniform(0, 15)
            agents.append(AgentState(i, "vehicle", rng.uniform(-50, 50),
                                     rng.uniform(-50, 50), th,
                                     sp*np.cos(th), sp*np.sin(th),
                                     rng.uniform(1.5, 2.5), rng.uniform(3.5, 6.0)))
        rand_frame = Frame(0.0, [], agents)
        out_r = scene_gen_mmd(rand_frame, ref)
        if out != "skip" and out_r != "skip":
            mmd_gen.append([out[k] for k in ("position", "heading", "velocity", "size")])
            mmd_rand.append([out_r[k] for k in ("position", "heading", "velocity", "size")])
            print(f"  scene-gen MMD {out['mean']:.4f} vs random {out_r['mean']:.4f} "
                  f"(census {census}, generated {len(gen.valid_agents())})")
    if mmd_gen:
        g, r = np.mean(mmd_gen, axis=0), np.mean(mmd_rand, axis=0)
        print(f"MEAN per-attr MMD gen {np.round(g, 4)} vs random {np.round(r, 4)}")


if __name__ == "__main__":
    main()
