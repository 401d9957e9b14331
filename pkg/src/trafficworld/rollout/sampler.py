"""Temperature-scaled top-k sampling restricted to a valid-token mask."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SamplerConfig:
    temperature: float = 1.1
    top_k: int = 40
    scene_temperature: float = 1.25
    scene_top_k: int = 400
    seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0 or self.scene_temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.top_k < 1 or self.scene_top_k < 1:
            raise ValueError("top_k must be >= 1")

    def effective(self, scene: bool) -> tuple[float, int]:
        return ((self.scene_temperature, self.scene_top_k) if scene
                else (self.temperature, self.top_k))


def masked_probabilities(logits: np.ndarray, mask: np.ndarray,
                         temperature: float, top_k: int) -> tuple[np.ndarray, np.ndarray]:
    """(candidate token ids, probabilities) after masking, temperature, top-k."""
    if len(mask) == 0:
        raise RuntimeError("empty valid mask")
    sub = np.asarray(logits, dtype=np.float64)[mask] / temperature
    if top_k < len(sub):
        keep = np.argpartition(sub, -top_k)[-top_k:]
        keep.sort()
        ids = np.asarray(mask)[keep]
        sub = sub[keep]
    else:
        ids = np.asarray(mask)
    sub = sub - sub.max()
    p = np.exp(sub)
    p /= p.sum()
    return ids, p


def sample_token(logits: np.ndarray, mask: np.ndarray, cfg: SamplerConfig,
                 rng: np.random.Generator, scene: bool = False) -> int:
    """Draw one token; off-mask probability is exactly zero. Advances rng."""
    temperature, top_k = cfg.effective(scene)
    ids, p = masked_probabilities(logits, mask, temperature, top_k)
    if top_k == 1 or len(ids) == 1:
        rng.random()  # keep stream advancement uniform across paths
        return int(ids[int(np.argmax(p))])
    u = rng.random()
    return int(ids[int(np.searchsorted(np.cumsum(p), u, side="right").clip(0, len(ids) - 1))])


def greedy_token(logits: np.ndarray, mask: np.ndarray) -> int:
    """Argmax over the mask (temperature -> 0 limit)."""
    sub = np.asarray(logits, dtype=np.float64)[mask]
    return int(np.asarray(mask)[int(np.argmax(sub))])
