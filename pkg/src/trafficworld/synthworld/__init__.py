from .types import (
    AgentState,
    Frame,
    IdmParams,
    Lane,
    MapModel,
    ScenarioLog,
    TrafficLightState,
    FRAME_DT,
    MAX_AGENTS,
    AGENT_CLASSES,
    LIGHT_STATES,
    PROMPT_TAGS,
)
from .idm import idm_accel
from .map_gen import MapSpec, generate_map
from .scenario import script_scenario
from .raster import RasterConfig, rasterize
from .logio import read_log, write_log, LogParseError

__all__ = [
    "AgentState", "Frame", "IdmParams", "Lane", "MapModel", "ScenarioLog",
    "TrafficLightState", "FRAME_DT", "MAX_AGENTS", "AGENT_CLASSES",
    "LIGHT_STATES", "PROMPT_TAGS", "idm_accel", "MapSpec", "generate_map",
    "script_scenario", "RasterConfig", "rasterize", "read_log", "write_log",
    "LogParseError",
]
