"""Interactive planner: propose policies, roll them out in the world model,
score the rollouts, pick the argmax."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..synthworld.types import AgentState, ScenarioLog
from ..metrics import RewardConfig, argmax_policy, estimate_value, nuplan_score
from ..rollout.engine import RolloutBatch, RolloutEngine
from .policies import ImitationPolicy, idm_policy_set


@dataclass
class PlanConfig:
    n_rollouts: int = 4
    horizon_s: float = 4.0
    reward: RewardConfig = field(default_factory=RewardConfig)
    workers: int = 1
    base_seed: int = 0

    def __post_init__(self):
        if self.n_rollouts < 1:
            raise ValueError("n_rollouts must be >= 1")


def default_policy_set(engine: RolloutEngine, seed: int = 0) -> list:
    """15 IDM variants plus the imitation policy (N_p = 16)."""
    return idm_policy_set() + [ImitationPolicy(engine, seed=seed)]


@dataclass
class PolicyEvaluation:
    names: list[str]
    values: list[float]
    chosen: int
    rollouts_executed: int
    batch: RolloutBatch
    per_rollout_scores: list[list[float]]


def evaluate_policies(engine: RolloutEngine, log: ScenarioLog, policies: list,
                      cfg: PlanConfig, start_t: int | None = None
                      ) -> PolicyEvaluation:
    """V-hat per policy from N_r scored rollouts; argmax ties go to the
    lowest index. A policy whose rollouts fail is reported with V = -inf."""
    start_t = engine.cl - 1 if start_t is None else start_t
    batch = engine.rollout_batch(log, policies, cfg.horizon_s, cfg.n_rollouts,
                                 base_seed=cfg.base_seed, start_t=start_t,
                                 workers=cfg.workers)
    horizon_steps = int(round(cfg.horizon_s / 0.5))
    expert = log.frames[start_t: start_t + horizon_steps + 1]
    values, scores = [], []
    for i in range(len(policies)):
        row = []
        try:
            for k in range(cfg.n_rollouts):
                frames = batch.logs[i][k].frames[start_t:]
                rep = nuplan_score(frames, log.map, cfg.reward, expert=expert)
                row.append(rep.composite)
            values.append(estimate_value(row, cfg.reward.gamma_disc))
        except Exception:
            values.append(-math.inf)
            row = []
        scores.append(row)
    return PolicyEvaluation(
        names=[getattr(p, "name", f"policy_{i}") for i, p in enumerate(policies)],
        values=values, chosen=argmax_policy(values),
        rollouts_executed=len(policies) * cfg.n_rollouts,
        batch=batch, per_rollout_scores=scores)


def plan_step(engine: RolloutEngine, log: ScenarioLog, policies: list,
              cfg: PlanConfig, start_t: int | None = None
              ) -> tuple[AgentState, PolicyEvaluation]:
    """Evaluate the policy set and return the chosen policy's immediate
    action plus the full score table."""
    start_t = engine.cl - 1 if start_t is None else start_t
    ev = evaluate_policies(engine, log, policies, cfg, start_t=start_t)
    frames = log.frames[max(0, start_t - engine.cl + 1): start_t + 1]
    action = policies[ev.chosen].act(frames, log.map)
    return action, ev
