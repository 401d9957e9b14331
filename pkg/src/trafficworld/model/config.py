"""Model hyperparameter configuration."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

from ..tokenizer import AttrSpec, QuantSpec, Vocabulary


@dataclass
class ModelConfig:
    d_model: int = 128
    n_layers: int = 4
    n_heads: int = 4
    cross_period: int = 2        # gated cross-attention after every k-th layer
    chunk_horizon: int = 4       # H pose steps per chunk; H * 0.5 s = 2 s
    raster_grid: int = 128
    raster_channels: int = 7
    raster_patch: int = 16
    gru_hidden: int = 128
    gru_layers: int = 2
    n_traj_modes: int = 6
    traj_head_period: int = 1    # a trajectory head after every n-th layer
    block_size: int = 2048
    n_agent_ids: int = 128
    n_prompt_tags: int = 12
    signed_velocity: bool = False
    quant: QuantSpec = field(default_factory=QuantSpec.default)

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.raster_grid % self.raster_patch:
            raise ValueError("raster_grid must be divisible by raster_patch")
        if self.chunk_horizon < 1:
            raise ValueError("chunk_horizon must be >= 1")

    def vocabulary(self) -> Vocabulary:
        from ..synthworld.types import PROMPT_TAGS
        return Vocabulary(quant=self.quant, n_agent_ids=self.n_agent_ids,
                          prompt_tags=PROMPT_TAGS[: self.n_prompt_tags])

    @property
    def n_raster_latents(self) -> int:
        return (self.raster_grid // self.raster_patch) ** 2

    @property
    def n_traj_heads(self) -> int:
        return self.n_layers // self.traj_head_period

    # --- presets --------------------------------------------------------
    @staticmethod
    def desk() -> "ModelConfig":
        return ModelConfig()

    @staticmethod
    def tiny() -> "ModelConfig":
        """Small variant for the scaling harness."""
        return ModelConfig(d_model=64, n_layers=2, n_heads=2, gru_hidden=64)

    @staticmethod
    def micro() -> "ModelConfig":
        """<= 5000 parameters with the coarse quantizer; for gradient checks."""
        return ModelConfig(d_model=8, n_layers=1, n_heads=1, cross_period=1,
                           chunk_horizon=2, raster_grid=4, raster_patch=2,
                           gru_hidden=8, gru_layers=2, n_traj_modes=2,
                           traj_head_period=1, block_size=96, n_agent_ids=8,
                           n_prompt_tags=4, quant=QuantSpec.tiny())

    # --- (de)serialization ------------------------------------------------
    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "quant"}
        d["quant"] = [asdict(a) for a in self.quant.attrs]
        return d

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        d = dict(d)
        quant = QuantSpec(attrs=tuple(AttrSpec(**a) for a in d.pop("quant")))
        return ModelConfig(quant=quant, **d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @staticmethod
    def from_json(s: str) -> "ModelConfig":
        return ModelConfig.from_dict(json.loads(s))
