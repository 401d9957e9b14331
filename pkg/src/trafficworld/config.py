"""Run configuration: one YAML file mapping documented keys to every tunable.

Unknown keys are rejected; the config hash is stable under key reordering
(sha256 of the canonical JSON dump of defaults merged with overrides).
"""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .model import ModelConfig
from .tokenizer import AttrSpec, QuantSpec
from .metrics import RealismConfig, RewardConfig
from .rollout import SamplerConfig
from .training import AugmentConfig, LossWeights, OptimConfig

DEFAULTS: dict = {
    "seed": 0,
    "data": {
        "n_train": 200, "n_val": 20, "n_holdout": 50,
        "n_vehicles_min": 6, "n_vehicles_max": 12,
        "n_pedestrians_min": 0, "n_pedestrians_max": 4,
        "n_frames": 40,
    },
    "model": {
        "preset": "desk",            # desk | tiny | micro
        "d_model": None, "n_layers": None, "n_heads": None,
        "cross_period": None, "chunk_horizon": None,
        "raster_grid": None, "raster_patch": None,
        "gru_hidden": None, "n_traj_modes": None, "block_size": None,
        "signed_velocity": False,
    },
    "quantizer": {
        name: None for name in ("x", "y", "theta", "w", "l", "v_x", "v_y")
    },
    "sampler": {
        "temperature": 1.1, "top_k": 40,
        "scene_temperature": 1.25, "scene_top_k": 400,
    },
    "rollout": {
        "gamma_agg": 1.2, "condition_length": 3,
        "horizon_s": 8.0, "n_rollouts": 16, "mode": "partial-ar",
        "max_newborn_per_frame": 8,
    },
    "training": {
        "lr": 2e-4, "weight_decay": 1e-3, "batch_size": 8, "epochs": 10,
        "milestones": [6, 8], "decay": 0.1, "accumulate_grad_batches": 1,
        "max_steps": None, "data_workers": 4, "start_window_fraction": 0.3,
        "loss": {"rec": 1.0, "ce": 1.0, "traj": [0.25, 0.25, 0.5, 0.5],
                 "alpha": 1.0, "beta": 1.0},
        "augment": {"dropout_p": 0.1, "rotation": 1.5707963267948966,
                    "translation_m": 5.0},
    },
    "metrics": {
        "miss_threshold_m": 2.0,
        "mmd_bandwidths": {"position": 10.0, "heading": 1.0,
                           "velocity": 2.5, "size": 0.5},
        "realism_smoothing": 0.02,
    },
    "planner": {"n_rollouts": 4, "horizon_s": 4.0, "workers": 0},
    "env": {"horizon_s": 8.0},
    "scaling": {"token_budget": 60000, "max_steps": 300},
}


class ConfigError(ValueError):
    pass


def _merge(defaults: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            out[key] = _merge(defaults[key], value, where)
        else:
            out[key] = value
    return out


class RunConfig:
    def __init__(self, data: dict | None = None):
        self.data = _merge(DEFAULTS, data or {})

    @staticmethod
    def load(path) -> "RunConfig":
        raw = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        return RunConfig(raw)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.data, sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    # --- typed views -----------------------------------------------------
    def model_config(self) -> ModelConfig:
        m = self.data["model"]
        cfg = {"desk": ModelConfig.desk, "tiny": ModelConfig.tiny,
               "micro": ModelConfig.micro}.get(m["preset"])
        if cfg is None:
            raise ConfigError(f"unknown model preset {m['preset']!r}")
        cfg = cfg()
        overrides = {k: v for k, v in m.items()
                     if k not in ("preset", "signed_velocity") and v is not None}
        quant = cfg.quant
        qo = {k: v for k, v in self.data["quantizer"].items() if v is not None}
        if m["signed_velocity"] or qo:
            base = QuantSpec.default(signed_velocity=m["signed_velocity"]) \
                if cfg.quant == QuantSpec.default() or m["signed_velocity"] else cfg.quant
            attrs = []
            for a in base.attrs:
                o = qo.get(a.name)
                attrs.append(AttrSpec(a.name, float(o["lo"]), float(o["hi"]),
                                      float(o["step"])) if o else a)
            quant = QuantSpec(attrs=tuple(attrs))
        d = cfg.to_dict()
        d.update(overrides)
        out = ModelConfig.from_dict(d)
        out.quant = quant
        return out

    def sampler_config(self) -> SamplerConfig:
        s = self.data["sampler"]
        return SamplerConfig(temperature=s["temperature"], top_k=s["top_k"],
                             scene_temperature=s["scene_temperature"],
                             scene_top_k=s["scene_top_k"])

    def optim_config(self) -> OptimConfig:
        t = self.data["training"]
        return OptimConfig(lr=t["lr"], weight_decay=t["weight_decay"],
                           batch_size=t["batch_size"], epochs=t["epochs"],
                           milestones=tuple(t["milestones"]), decay=t["decay"],
                           accumulate_grad_batches=t["accumulate_grad_batches"],
                           max_steps=t["max_steps"],
                           condition_length=self.data["rollout"]["condition_length"],
                           start_window_fraction=t["start_window_fraction"],
                           data_workers=t["data_workers"])

    def loss_weights(self) -> LossWeights:
        l = self.data["training"]["loss"]
        return LossWeights(rec=l["rec"], ce=l["ce"], traj=tuple(l["traj"]),
                           alpha=l["alpha"], beta=l["beta"])

    def augment_config(self) -> AugmentConfig:
        a = self.data["training"]["augment"]
        return AugmentConfig(dropout_p=a["dropout_p"],
                             rotation_range=(-a["rotation"], a["rotation"]),
                             translation_m=a["translation_m"])

    def reward_config(self) -> RewardConfig:
        return RewardConfig()

    def realism_config(self) -> RealismConfig:
        return RealismConfig(smoothing=self.data["metrics"]["realism_smoothing"])
