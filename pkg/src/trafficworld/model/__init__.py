from .config import ModelConfig
from .decoder import (PLAN_GENERATIVE, PLAN_LIGHT, PLAN_TRACKED, ROLE_ATTR,
                      ROLE_KEY_CLASS, ROLE_KEY_ID, ROLE_LIGHT_STATE,
                      ChunkDecoder, Slot, build_plans, slot_mask)
from .network import WorldModel, sinusoidal_embedding
from .tensorize import SeqTensors, collate, tensorize_events, tensorize_window
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "ModelConfig", "WorldModel", "sinusoidal_embedding",
    "ChunkDecoder", "Slot", "build_plans", "slot_mask",
    "PLAN_GENERATIVE", "PLAN_LIGHT", "PLAN_TRACKED",
    "ROLE_ATTR", "ROLE_KEY_CLASS", "ROLE_KEY_ID", "ROLE_LIGHT_STATE",
    "SeqTensors", "collate", "tensorize_events", "tensorize_window",
    "load_checkpoint", "save_checkpoint",
]
