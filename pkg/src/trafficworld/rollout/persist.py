"""Rollout batches on disk: one scenario-log file per rollout plus a manifest."""
from __future__ import annotations

import json
from pathlib import Path

from ..synthworld.logio import read_log, write_log
from .engine import RolloutBatch

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


def save_rollout_batch(batch: RolloutBatch, out_dir, config_hash: str = "",
                       complete: bool = True) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_log(batch.source, out / "source.jsonl")
    files = []
    for i, row in enumerate(batch.logs):
        for k, log in enumerate(row):
            name = f"rollout_{i:03d}_{k:03d}.jsonl"
            write_log(log, out / name)
            files.append(name)
    manifest = {
        "version": MANIFEST_VERSION,
        "source_seed": batch.source.seed,
        "start_t": batch.start_t,
        "horizon_s": batch.horizon_s,
        "mode": batch.mode,
        "policy_names": batch.policy_names,
        "seeds": batch.seeds,
        "files": files,
        "config_hash": config_hash,
        "complete": complete,
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_rollout_batch(in_dir) -> RolloutBatch:
    path = Path(in_dir)
    manifest = json.loads((path / MANIFEST_NAME).read_text())
    if manifest.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported rollout manifest version")
    source = read_log(path / "source.jsonl")
    seeds = manifest["seeds"]
    n_p, n_r = len(seeds), len(seeds[0]) if seeds else 0
    it = iter(manifest["files"])
    logs = [[read_log(path / next(it)) for _ in range(n_r)] for _ in range(n_p)]
    return RolloutBatch(source=source, start_t=manifest["start_t"],
                        horizon_s=manifest["horizon_s"], mode=manifest["mode"],
                        policy_names=manifest["policy_names"], seeds=seeds, logs=logs)
