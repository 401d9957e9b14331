"""Cross-entropy-method policy improvement on the world-model environment.

Validates the environment contract end to end with a linear
observation -> (accel, yaw rate) policy; the paper-style actor-critic
trainer is out of scope.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .env import ACCEL_CAP, OBS_DIM, YAW_RATE_CAP, WorldEnv


@dataclass
class LinearPolicyTemplate:
    obs_dim: int = OBS_DIM

    @property
    def n_params(self) -> int:
        return 2 * (self.obs_dim + 1)

    def act(self, params: np.ndarray, obs: np.ndarray) -> tuple[float, float]:
        w = params[: 2 * self.obs_dim].reshape(2, self.obs_dim)
        b = params[2 * self.obs_dim:]
        raw = w @ obs + b
        return (ACCEL_CAP * math.tanh(raw[0]), YAW_RATE_CAP * math.tanh(raw[1]))


def run_episode(env: WorldEnv, template: LinearPolicyTemplate,
                params: np.ndarray, seed: int) -> float:
    state, obs = env.reset(seed)
    while not state.done:
        state, obs, _, _ = env.step(state, template.act(params, obs))
    return env.episode_score(state).composite


def random_policy_score(env: WorldEnv, episodes: int, seed: int) -> float:
    """Mean episode score of uniformly random actions (the baseline)."""
    rng = np.random.default_rng(np.random.Philox(key=seed))
    total = 0.0
    for e in range(episodes):
        state, obs = env.reset(seed * 977 + e)
        while not state.done:
            a = (float(rng.uniform(-ACCEL_CAP, ACCEL_CAP)),
                 float(rng.uniform(-YAW_RATE_CAP, YAW_RATE_CAP)))
            state, obs, _, _ = env.step(state, a)
        total += env.episode_score(state).composite
    return total / episodes


def select_elites(scores, k: int) -> list[int]:
    """Indices of the k highest scores (stable for ties)."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order[:k]


@dataclass
class CemResult:
    params: np.ndarray
    curve: list[float]            # mean elite score per iteration
    population_curve: list[float]
    best_score: float


def cem_improve(env: WorldEnv, template: LinearPolicyTemplate | None = None,
                iterations: int = 30, population: int = 10,
                elite_frac: float = 0.3, episodes_per: int = 2,
                seed: int = 0, init_std: float = 0.5,
                std_floor: float = 0.05) -> CemResult:
    if population < 1:
        raise ValueError("population must be >= 1")
    template = template or LinearPolicyTemplate()
    rng = np.random.default_rng(np.random.Philox(key=seed))
    mu = np.zeros(template.n_params)
    sigma = np.full(template.n_params, init_std)
    n_elite = max(1, int(round(elite_frac * population)))
    curve, pop_curve = [], []
    best_params, best_score = mu.copy(), -math.inf
    for it in range(iterations):
        cand = mu[None] + sigma[None] * rng.normal(size=(population, template.n_params))
        scores = []
        for p_idx in range(population):
            s = np.mean([run_episode(env, template, cand[p_idx],
                                     seed=seed * 100_003 + it * 131 + p_idx * 7 + e)
                         for e in range(episodes_per)])
            scores.append(float(s))
        elites = select_elites(scores, n_elite)
        elite_params = cand[elites]
        mu = elite_params.mean(axis=0)
        sigma = np.maximum(elite_params.std(axis=0), std_floor)
        curve.append(float(np.mean([scores[i] for i in elites])))
        pop_curve.append(float(np.mean(scores)))
        top = elites[0]
        if scores[top] > best_score:
            best_score, best_params = scores[top], cand[top].copy()
    return CemResult(params=best_params, curve=curve,
                     population_curve=pop_curve, best_score=best_score)
