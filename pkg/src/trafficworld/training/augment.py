"""Scenario augmentation: joint rigid transforms, crops, dropout, recentering."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..synthworld.types import ScenarioLog


@dataclass
class AugmentConfig:
    dropout_p: float = 0.1                      # agent and whole-frame token dropout
    rotation_range: tuple[float, float] = (-math.pi / 2, math.pi / 2)
    translation_m: float = 5.0                  # +/- per axis
    crop_len: int | None = None
    recenter_random_agent: bool = False

    def __post_init__(self):
        if not 0.0 <= self.dropout_p <= 1.0:
            raise ValueError("dropout_p must be in [0, 1]")

    @staticmethod
    def identity() -> "AugmentConfig":
        return AugmentConfig(dropout_p=0.0, rotation_range=(0.0, 0.0),
                             translation_m=0.0)


def augment_scenario(log: ScenarioLog, cfg: AugmentConfig, seed: int) -> ScenarioLog:
    """Deterministic per seed. Dropped agents/frames are marked invalid; the
    rigid transform applies jointly to the map and every agent state."""
    rng = np.random.default_rng(np.random.Philox(key=seed))

    frames = log.frames
    if cfg.crop_len is not None and len(frames) > cfg.crop_len:
        start = int(rng.integers(0, len(frames) - cfg.crop_len + 1))
        frames = frames[start: start + cfg.crop_len]
    out = ScenarioLog(map=log.map, prompt=list(log.prompt),
                      frames=list(frames), seed=log.seed)

    translation = np.zeros(2)
    if cfg.recenter_random_agent and out.frames:
        candidates = out.frames[0].valid_agents()
        if candidates:
            a = candidates[int(rng.integers(0, len(candidates)))]
            translation -= np.array([a.x, a.y])
    rot = 0.0
    if cfg.rotation_range != (0.0, 0.0):
        rot = float(rng.uniform(*cfg.rotation_range))
    if cfg.translation_m > 0.0:
        translation += rng.uniform(-cfg.translation_m, cfg.translation_m, size=2)

    out = out.transformed(rotation=rot, translation=tuple(translation))

    if cfg.dropout_p > 0.0:
        for fi, fr in enumerate(out.frames):
            if rng.random() < cfg.dropout_p:
                # whole-frame dropout (ego in frame 0 keeps the log valid)
                for a in fr.agents:
                    if not (fi == 0 and a.agent_id == 0):
                        a.valid = False
                continue
            for a in fr.agents:
                if fi == 0 and a.agent_id == 0:
                    continue
                if rng.random() < cfg.dropout_p:
                    a.valid = False
    return out
