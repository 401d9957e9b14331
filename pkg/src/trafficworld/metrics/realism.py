"""Realism likelihood suite: per-component histogram NLL of the ground truth
under the rollout distribution, exponentiated and weight-averaged."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..synthworld.types import Frame, MapModel
from .features import (FEATURE_NAMES, INTERACTIVE, KINEMATIC, MAP_BASED,
                       FeatureTable, compute_features)


def _edges(lo: float, hi: float, n: int) -> np.ndarray:
    return np.linspace(lo, hi, n + 1)


DEFAULT_BINS: dict[str, np.ndarray] = {
    "linear_speed": _edges(0.0, 30.0, 30),
    "linear_accel": _edges(0.0, 10.0, 20),
    "angular_speed": _edges(-3.0, 3.0, 24),
    "angular_accel": _edges(0.0, 6.0, 24),
    "dist_to_nearest": _edges(-10.0, 50.0, 60),
    "collision": np.array([-0.5, 0.5, 1.5]),
    "ttc": _edges(0.0, 15.0, 15),
    "dist_to_road_edge": _edges(-10.0, 20.0, 30),
    "road_departure": np.array([-0.5, 0.5, 1.5]),
}

CATEGORIES = {"kinematic": KINEMATIC, "interactive": INTERACTIVE,
              "map_based": MAP_BASED}


@dataclass
class RealismConfig:
    bin_edges: dict[str, np.ndarray] = field(default_factory=lambda: dict(DEFAULT_BINS))
    smoothing: float = 0.02            # mass mixed with the uniform distribution
    weights: dict[str, float] = field(
        default_factory=lambda: {n: 1.0 for n in FEATURE_NAMES})

    def __post_init__(self):
        for name, e in self.bin_edges.items():
            if not np.all(np.diff(e) > 0):
                raise ValueError(f"{name}: bin edges must be strictly increasing")
        if all(w == 0 for w in self.weights.values()):
            raise ValueError("weights must not all be zero")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("weights must be nonnegative")


def _bin_of(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    clipped = np.clip(values, edges[0], edges[-1] - 1e-9)
    return np.clip(np.searchsorted(edges, clipped, side="right") - 1,
                   0, len(edges) - 2)


def component_likelihood(rollout_values: np.ndarray, gt_values: np.ndarray,
                         valid: np.ndarray, edges: np.ndarray,
                         smoothing: float = 0.02) -> float:
    """m = exp(-mean NLL) over valid cells.

    rollout_values: (N_r, ...) samples per cell; gt_values/valid: (...) per
    cell. The per-cell distribution is the smoothed histogram of the N_r
    rollout values: p = (1 - eps) * empirical + eps / n_bins.
    """
    rollout_values = np.asarray(rollout_values, dtype=float)
    gt_values = np.asarray(gt_values, dtype=float)
    valid = np.asarray(valid, dtype=bool)
    if not valid.any():
        raise ValueError("no valid cells")
    n_r = rollout_values.shape[0]
    n_bins = len(edges) - 1
    r_bins = _bin_of(rollout_values, edges)          # (N_r, ...)
    g_bins = _bin_of(gt_values, edges)
    nll_sum, n = 0.0, 0
    flat_r = r_bins.reshape(n_r, -1)
    flat_g = g_bins.reshape(-1)
    flat_v = valid.reshape(-1)
    for cell in np.nonzero(flat_v)[0]:
        counts = np.bincount(flat_r[:, cell], minlength=n_bins)
        p = (1.0 - smoothing) * counts / n_r + smoothing / n_bins
        nll_sum += -math.log(p[flat_g[cell]])
        n += 1
    return math.exp(-nll_sum / n)


def composite_realism(component_scores: dict[str, float],
                      cfg: RealismConfig | None = None
                      ) -> tuple[dict[str, float], float]:
    """Weighted category scores and the overall meta metric."""
    cfg = cfg or RealismConfig()
    missing = set(FEATURE_NAMES) - set(component_scores)
    if missing:
        raise ValueError(f"missing components: {sorted(missing)}")
    cats = {}
    for cat, names in CATEGORIES.items():
        w = np.array([cfg.weights[n] for n in names])
        m = np.array([component_scores[n] for n in names])
        cats[cat] = float((w * m).sum() / w.sum())
    w = np.array([cfg.weights[n] for n in FEATURE_NAMES])
    m = np.array([component_scores[n] for n in FEATURE_NAMES])
    meta = float((w * m).sum() / w.sum())
    return cats, meta


def realism_suite(rollout_frames: list[list[Frame]], gt_frames: list[Frame],
                  map_model: MapModel, cfg: RealismConfig | None = None
                  ) -> tuple[dict[str, float], dict[str, float], float]:
    """Component scores, category scores and meta metric for one scenario.

    All rollouts and the ground truth must cover the same timestamps; the
    rollout distribution per cell is formed across the N_r rollouts.
    """
    cfg = cfg or RealismConfig()
    ids = sorted({a.agent_id for f in gt_frames for a in f.valid_agents()})
    gt = compute_features(gt_frames, map_model, agent_ids=ids)
    tables = [compute_features(fr, map_model, agent_ids=ids) for fr in rollout_frames]
    comps = {}
    for name in FEATURE_NAMES:
        r_vals = np.stack([tb.values[name] for tb in tables])        # (N_r, A, T)
        r_valid = np.stack([tb.valid[name] for tb in tables]).all(axis=0)
        valid = gt.valid[name] & r_valid
        if not valid.any():
            comps[name] = 1.0   # no evidence either way
            continue
        comps[name] = component_likelihood(r_vals, gt.values[name], valid,
                                           cfg.bin_edges[name], cfg.smoothing)
    cats, meta = composite_realism(comps, cfg)
    return comps, cats, meta
