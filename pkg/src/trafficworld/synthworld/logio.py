"""Scenario log file format: JSON-lines, one frame per line.

Line 1 is a header record carrying format version, map, prompt and seed;
every following line is one frame. Floats round-trip exactly (shortest
repr). Field names and units are documented in the README.
"""
from __future__ import annotations

import json
from pathlib import Path

from .types import (AgentState, Frame, MapModel, ScenarioLog,
                    TrafficLightState, ValidationError)

FORMAT_VERSION = 1


class LogParseError(ValueError):
    """Malformed scenario log; message carries line and field context."""


def write_log(log: ScenarioLog, path) -> None:
    log.validate()
    path = Path(path)
    with path.open("w") as fh:
        header = {
            "kind": "header",
            "version": FORMAT_VERSION,
            "seed": log.seed,
            "prompt": list(log.prompt),
            "map": log.map.to_dict(),
        }
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for fr in log.frames:
            rec = {
                "kind": "frame",
                "time": fr.time,
                "lights": [[lt.anchor, lt.state] for lt in fr.lights],
                "agents": [
                    [a.agent_id, a.agent_class, a.x, a.y, a.theta,
                     a.v_x, a.v_y, a.w, a.l, int(a.valid)]
                    for a in fr.agents
                ],
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_log(path) -> ScenarioLog:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise LogParseError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise LogParseError(f"{path}:1: bad JSON in header: {e}") from e
    if header.get("kind") != "header":
        raise LogParseError(f"{path}:1: first record must be a header")
    if header.get("version") != FORMAT_VERSION:
        raise LogParseError(f"{path}:1: unsupported format version {header.get('version')!r}")
    try:
        map_model = MapModel.from_dict(header["map"])
        prompt = [str(t) for t in header["prompt"]]
        seed = int(header["seed"])
    except (KeyError, TypeError, ValueError) as e:
        raise LogParseError(f"{path}:1: bad header field: {e}") from e

    frames = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as e:
            raise LogParseError(f"{path}:{lineno}: bad JSON: {e}") from e
        if rec.get("kind") != "frame":
            raise LogParseError(f"{path}:{lineno}: expected a frame record")
        try:
            lights = [TrafficLightState(int(a), str(s)) for a, s in rec["lights"]]
            agents = [
                AgentState(int(f[0]), str(f[1]), float(f[2]), float(f[3]), float(f[4]),
                           float(f[5]), float(f[6]), float(f[7]), float(f[8]), bool(f[9]))
                for f in rec["agents"]
            ]
            frames.append(Frame(time=float(rec["time"]), lights=lights, agents=agents))
        except (KeyError, TypeError, ValueError, IndexError) as e:
            raise LogParseError(f"{path}:{lineno}: bad frame field: {e}") from e

    log = ScenarioLog(map=map_model, prompt=prompt, frames=frames, seed=seed)
    try:
        log.validate()
    except ValidationError as e:
        raise LogParseError(f"{path}: invalid log: {e}") from e
    return log
