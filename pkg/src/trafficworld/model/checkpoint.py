"""Self-describing checkpoint container (.npz with embedded config)."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig
from .network import WorldModel

CHECKPOINT_VERSION = 1


def save_checkpoint(model: WorldModel, path) -> None:
    arrays = {f"param/{k}": v.detach().cpu().numpy()
              for k, v in model.state_dict().items()}
    arrays["__version__"] = np.array(CHECKPOINT_VERSION)
    arrays["__config__"] = np.array(model.cfg.to_json())
    np.savez(Path(path), **arrays)


def load_checkpoint(path) -> WorldModel:
    """Rebuild the model; parameter shapes are validated against the config."""
    with np.load(Path(path), allow_pickle=False) as data:
        version = int(data["__version__"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        cfg = ModelConfig.from_json(str(data["__config__"]))
        model = WorldModel(cfg)
        state = model.state_dict()
        loaded = {}
        for key in data.files:
            if not key.startswith("param/"):
                continue
            name = key[len("param/"):]
            if name not in state:
                raise ValueError(f"unexpected parameter {name!r} in checkpoint")
            arr = data[key]
            if tuple(arr.shape) != tuple(state[name].shape):
                raise ValueError(f"shape mismatch for {name!r}: "
                                 f"{arr.shape} vs {tuple(state[name].shape)}")
            loaded[name] = torch.from_numpy(arr)
        missing = set(state) - set(loaded)
        if missing:
            raise ValueError(f"checkpoint missing parameters: {sorted(missing)[:5]}")
        model.load_state_dict(loaded)
    model.eval()
    return model
