"""Laser Learning Environment: a cooperative laser grid world and a value-based MARL stack."""

from .mapfmt import MapFormatError, MapSpec, load_level, load_map, load_toy, parse_map, serialize_map
from .tiles import Action, Direction, Position, Tile, TileKind
from .world import BeamMap, StepOutcome, World, compute_beams, max_score, reset, time_limit

__all__ = [
    "Action",
    "BeamMap",
    "Direction",
    "MapFormatError",
    "MapSpec",
    "Position",
    "StepOutcome",
    "Tile",
    "TileKind",
    "World",
    "compute_beams",
    "load_level",
    "load_map",
    "load_toy",
    "max_score",
    "parse_map",
    "reset",
    "serialize_map",
    "time_limit",
]
