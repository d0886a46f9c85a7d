"""Grid primitives shared by the map format and the simulator."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple


class Position(NamedTuple):
    row: int
    col: int


class Direction(enum.Enum):
    NORTH = "N"
    EAST = "E"
    SOUTH = "S"
    WEST = "W"

    @property
    def delta(self) -> tuple[int, int]:
        return _DELTAS[self]


_DELTAS = {
    Direction.NORTH: (-1, 0),
    Direction.EAST: (0, 1),
    Direction.SOUTH: (1, 0),
    Direction.WEST: (0, -1),
}


class Action(enum.IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3
    STAY = 4

    @property
    def delta(self) -> tuple[int, int]:
        if self is Action.STAY:
            return (0, 0)
        return Direction[self.name].delta


N_ACTIONS = len(Action)


class TileKind(enum.Enum):
    FLOOR = "floor"
    WALL = "wall"
    GEM = "gem"
    EXIT = "exit"
    START = "start"
    SOURCE = "source"


@dataclass(frozen=True)
class Tile:
    """One cell of a map.

    ``agent`` is set for start tiles, ``color`` and ``direction`` for laser
    sources. Color ids coincide with agent ids.
    """

    kind: TileKind
    agent: int | None = None
    color: int | None = None
    direction: Direction | None = None

    @property
    def walkable(self) -> bool:
        return self.kind not in (TileKind.WALL, TileKind.SOURCE)


FLOOR = Tile(TileKind.FLOOR)
WALL = Tile(TileKind.WALL)
GEM = Tile(TileKind.GEM)
EXIT = Tile(TileKind.EXIT)


def start(agent: int) -> Tile:
    return Tile(TileKind.START, agent=agent)


def source(color: int, direction: Direction) -> Tile:
    return Tile(TileKind.SOURCE, color=color, direction=direction)
