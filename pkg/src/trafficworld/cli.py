"""Command-line orchestration: one subcommand per pipeline stage."""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig
from .synthworld import generate_map, read_log, script_scenario, write_log
from .synthworld.types import FRAME_DT, ScenarioLog
from .tokenizer import Vocabulary
from .model import ModelConfig, WorldModel, load_checkpoint
from .rollout import (MODE_FULL_AR, MODE_PARTIAL_AR, RolloutEngine,
                      load_rollout_batch, save_rollout_batch)
from .training import (AugmentConfig, LossWeights, OptimConfig, scaling_report,
                       train_model)
from .metrics import (RealismConfig, RewardConfig, displacement_metrics,
                      realism_suite, scene_gen_mmd, SKIP)
from .engines import (EnvConfig, PlanConfig, WorldEnv, cem_improve,
                      default_policy_set, plan_step, random_policy_score)
from .render import render_log

WORKERS_ENV = "TRAFFICWORLD_WORKERS"


def _workers(cfg_value: int = 0) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    if cfg_value and cfg_value > 0:
        return cfg_value
    return max(1, (os.cpu_count() or 2) // 2)


def _write_manifest(out_dir: Path, payload: dict) -> None:
    payload = dict(payload)
    payload.setdefault("complete", True)
    payload.setdefault("created", time.strftime("%Y-%m-%dT%H:%M:%S"))
    (out_dir / "manifest.json").write_text(json.dumps(payload, indent=1,
                                                      sort_keys=True))


def _load_dir_logs(path: Path) -> list[ScenarioLog]:
    files = sorted(path.glob("*.jsonl"))
    if not files:
        raise SystemExit(f"no scenario logs (*.jsonl) under {path}")
    return [read_log(f) for f in files]


def cmd_gen_data(args, cfg: RunConfig) -> int:
    rng = np.random.default_rng(np.random.Philox(key=args.seed))
    d = cfg["data"]
    out = Path(args.out)
    for split, count in (("train", d["n_train"]), ("val", d["n_val"]),
                         ("holdout", d["n_holdout"])):
        split_dir = out / split
        split_dir.mkdir(parents=True, exist_ok=True)
        for i in range(count):
            seed = int(rng.integers(0, 2 ** 31))
            m = generate_map(seed)
            nv = int(rng.integers(d["n_vehicles_min"], d["n_vehicles_max"] + 1))
            np_ = int(rng.integers(d["n_pedestrians_min"], d["n_pedestrians_max"] + 1))
            log = script_scenario(m, nv, np_, d["n_frames"], seed=seed)
            write_log(log, split_dir / f"scenario_{i:04d}.jsonl")
        _write_manifest(split_dir, {"kind": "corpus", "split": split,
                                    "count": count, "seed": args.seed,
                                    "config_hash": cfg.config_hash})
        print(f"gen-data: wrote {count} logs to {split_dir}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    torch.set_num_threads(1)
    corpus = _load_dir_logs(Path(args.scenarios))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, report = train_model(corpus, cfg.model_config(), cfg.loss_weights(),
                                cfg.optim_config(), seed=args.seed,
                                out_dir=out, augment_cfg=cfg.augment_config())
    _write_manifest(out, {"kind": "checkpoint", "seed": args.seed,
                          "scenarios": str(args.scenarios),
                          "steps": report.steps[-1] if report.steps else 0,
                          "final_ce": report.ce[-1] if report.ce else None,
                          "wall_time_s": report.wall_time,
                          "config_hash": cfg.config_hash})
    print(f"train: {report.steps[-1]} steps, final CE {report.ce[-1]:.4f}, "
          f"checkpoint {report.checkpoint}")
    return 0


def _make_engine(args, cfg: RunConfig) -> RolloutEngine:
    torch.set_num_threads(1)
    model = load_checkpoint(args.checkpoint)
    r = cfg["rollout"]
    return RolloutEngine(model, sampler=cfg.sampler_config(),
                         gamma_agg=r["gamma_agg"],
                         condition_length=r["condition_length"],
                         max_newborn_per_frame=r["max_newborn_per_frame"])


def cmd_rollout(args, cfg: RunConfig) -> int:
    engine = _make_engine(args, cfg)
    logs = _load_dir_logs(Path(args.scenarios))
    out = Path(args.out)
    mode = args.mode or cfg["rollout"]["mode"]
    horizon = args.horizon or cfg["rollout"]["horizon_s"]
    n_r = cfg["rollout"]["n_rollouts"]
    workers = _workers(cfg["planner"]["workers"])
    for i, log in enumerate(logs):
        batch = engine.rollout_batch(log, None, horizon, n_r,
                                     base_seed=args.seed + i, mode=mode,
                                     workers=workers)
        save_rollout_batch(batch, out / f"scenario_{i:04d}",
                           config_hash=cfg.config_hash)
    _write_manifest(out, {"kind": "rollout_batches", "count": len(logs),
                          "mode": mode, "horizon_s": horizon,
                          "n_rollouts": n_r, "seed": args.seed,
                          "config_hash": cfg.config_hash})
    print(f"rollout: {len(logs)} batches ({mode}, {horizon}s x {n_r}) -> {out}")
    return 0


def cmd_evaluate(args, cfg: RunConfig) -> int:
    root = Path(args.rollouts)
    batch_dirs = sorted(p.parent for p in root.glob("*/manifest.json"))
    if not batch_dirs:
        raise SystemExit(f"no rollout batches under {root}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    realism_cfg = cfg.realism_config()
    rows, metas, ades = [], [], []
    for bdir in batch_dirs:
        batch = load_rollout_batch(bdir)
        start = batch.start_t
        T = int(round(batch.horizon_s / FRAME_DT)) + 1
        gt = batch.source.frames[start: start + T]
        rollouts = [lg.frames[start: start + T] for lg in batch.flat_logs()]
        comps, cats, meta = realism_suite(rollouts, gt, batch.source.map,
                                          realism_cfg)
        disp = displacement_metrics(rollouts, gt,
                                    miss_threshold=cfg["metrics"]["miss_threshold_m"])
        metas.append(meta)
        ades.append(disp["minADE"])
        rows.append({"batch": bdir.name, "meta": meta, **cats, **disp,
                     "components": comps})
    report = {"config_hash": cfg.config_hash,
              "mean_meta": float(np.mean(metas)),
              "mean_minADE": float(np.mean(ades)),
              "scenarios": rows}
    (out / "evaluation.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    with (out / "evaluation.tsv").open("w") as fh:
        fh.write("batch\tmeta\tminADE\tminFDE\tmiss_rate\n")
        for r in rows:
            fh.write(f"{r['batch']}\t{r['meta']:.4f}\t{r['minADE']:.3f}\t"
                     f"{r['minFDE']:.3f}\t{r['miss_rate']:.3f}\n")
    print(f"evaluate: mean realism meta {report['mean_meta']:.4f}, "
          f"mean minADE {report['mean_minADE']:.3f} over {len(rows)} scenarios")
    return 0


def cmd_plan(args, cfg: RunConfig) -> int:
    engine = _make_engine(args, cfg)
    logs = _load_dir_logs(Path(args.scenarios))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pcfg = PlanConfig(n_rollouts=cfg["planner"]["n_rollouts"],
                      horizon_s=args.horizon or cfg["planner"]["horizon_s"],
                      reward=cfg.reward_config(),
                      workers=_workers(cfg["planner"]["workers"]),
                      base_seed=args.seed)
    n_policies = args.policies or 16
    for i, log in enumerate(logs):
        policies = default_policy_set(engine, seed=args.seed)[:n_policies]
        action, ev = plan_step(engine, log, policies, pcfg)
        payload = {
            "scenario": i,
            "chosen": ev.names[ev.chosen],
            "action": {"x": action.x, "y": action.y, "theta": action.theta,
                       "v_x": action.v_x, "v_y": action.v_y},
            "values": dict(zip(ev.names, ev.values)),
            "rollouts_executed": ev.rollouts_executed,
        }
        (out / f"plan_{i:04d}.json").write_text(json.dumps(payload, indent=1,
                                                           sort_keys=True))
        print(f"plan[{i}]: chose {ev.names[ev.chosen]} "
              f"(V={ev.values[ev.chosen]:.3f}, {ev.rollouts_executed} rollouts)")
    _write_manifest(out, {"kind": "plans", "count": len(logs),
                          "seed": args.seed, "config_hash": cfg.config_hash})
    return 0


def cmd_rl_check(args, cfg: RunConfig) -> int:
    engine = _make_engine(args, cfg)
    logs = _load_dir_logs(Path(args.scenarios))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    env = WorldEnv(engine, logs, EnvConfig(horizon_s=cfg["env"]["horizon_s"],
                                           reward=cfg.reward_config()))
    state, obs = env.reset(seed=args.seed)
    assert obs.shape == (82,), "observation layout contract"
    # determinism probe
    s1, o1 = env.reset(seed=args.seed)
    s2, o2 = env.reset(seed=args.seed)
    assert np.array_equal(o1, o2), "reset determinism contract"
    baseline = random_policy_score(env, episodes=3, seed=args.seed)
    result = cem_improve(env, iterations=args.iterations, population=6,
                         episodes_per=1, seed=args.seed)
    with (out / "cem_curve.tsv").open("w") as fh:
        fh.write("iteration\telite_mean\tpopulation_mean\n")
        for i, (e, p) in enumerate(zip(result.curve, result.population_curve)):
            fh.write(f"{i}\t{e:.4f}\t{p:.4f}\n")
    _write_manifest(out, {"kind": "rl_check", "baseline": baseline,
                          "best_score": result.best_score,
                          "iterations": args.iterations, "seed": args.seed,
                          "config_hash": cfg.config_hash})
    print(f"rl-check: contract OK; random baseline {baseline:.3f}, "
          f"CEM best {result.best_score:.3f}")
    return 0


def cmd_render(args, cfg: RunConfig) -> int:
    src = Path(args.scenarios)
    files = [src] if src.is_file() else sorted(src.glob("*.jsonl"))
    out = Path(args.out)
    n = 0
    for f in files:
        log = read_log(f)
        frames = log.frames if args.frame is None else [log.frames[args.frame]]
        paths = render_log(log.map, frames, out / f.stem)
        n += len(paths)
    print(f"render: wrote {n} SVG files to {out}")
    return 0


def cmd_scaling(args, cfg: RunConfig) -> int:
    torch.set_num_threads(1)
    corpus = _load_dir_logs(Path(args.scenarios))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    configs = {"tiny": ModelConfig.tiny(), "desk": ModelConfig.desk()}
    ocfg = cfg.optim_config()
    ocfg.max_steps = cfg["scaling"]["max_steps"]
    rep = scaling_report(configs, corpus, cfg["scaling"]["token_budget"],
                         optim_cfg=ocfg, seed=args.seed)
    (out / "scaling.tsv").write_text(rep.to_tsv())
    (out / "comparison.tsv").write_text(rep.comparison_table())
    _write_manifest(out, {"kind": "scaling", "token_budget": rep.token_budget,
                          "seed": args.seed, "config_hash": cfg.config_hash})
    print(rep.comparison_table())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trafficworld",
                                description="generative traffic world model")
    p.add_argument("--config", type=str, default=None, help="YAML run config")
    p.add_argument("--seed", type=int, default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-data", help="generate the synthetic scenario corpus")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_gen_data)

    s = sub.add_parser("train", help="train the world model")
    s.add_argument("--scenarios", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("rollout", help="extrapolate scenarios with the model")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--scenarios", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mode", choices=[MODE_FULL_AR, MODE_PARTIAL_AR], default=None)
    s.add_argument("--horizon", type=float, default=None)
    s.set_defaults(fn=cmd_rollout)

    s = sub.add_parser("evaluate", help="score rollout batches (realism + displacement)")
    s.add_argument("--rollouts", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("plan", help="closed-loop policy selection")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--scenarios", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--policies", type=int, default=None)
    s.add_argument("--horizon", type=float, default=None)
    s.set_defaults(fn=cmd_plan)

    s = sub.add_parser("rl-check", help="environment contract checks + CEM demo")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--scenarios", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--iterations", type=int, default=5)
    s.set_defaults(fn=cmd_rl_check)

    s = sub.add_parser("render", help="render frames to SVG")
    s.add_argument("--scenarios", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--frame", type=int, default=None)
    s.set_defaults(fn=cmd_render)

    s = sub.add_parser("scaling", help="loss-vs-tokens scaling report")
    s.add_argument("--scenarios", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_scaling)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        return args.fn(args, cfg)
    except (ValueError, RuntimeError, OSError) as e:
        print(f"error [{args.command}]: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
