"""Text map format (``.lle``), validation and the embedded standard levels.

Grammar: one grid row per line, cells separated by whitespace.

    .       floor
    @       wall
    G       gem
    X       exit
    S<k>    start tile of agent k
    L<k><D> laser source of color k firing towards D in {N, E, S, W}

Serialized output is canonical: single spaces between tokens and every row
terminated by ``\\n``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from typing import NamedTuple

from .tiles import EXIT, FLOOR, GEM, WALL, Direction, Position, Tile, TileKind, source, start

N_LEVELS = 6

_START_RE = re.compile(r"S(\d+)")
_SOURCE_RE = re.compile(r"L(\d+)(.)")
_SIMPLE = {".": FLOOR, "@": WALL, "G": GEM, "X": EXIT}


class MapFormatError(ValueError):
    """Raised for malformed or invalid maps. Carries the offending cell when known."""

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        self.row = row
        self.col = col
        if row is not None:
            message = f"{message} (row {row}, col {col})"
        super().__init__(message)


class LaserSource(NamedTuple):
    position: Position
    color: int
    direction: Direction


@dataclass(frozen=True)
class MapSpec:
    """Static description of a level. Constructing one validates it."""

    width: int
    height: int
    tiles: tuple[tuple[Tile, ...], ...]

    def __post_init__(self):
        _validate(self)

    def tile(self, pos: Position | tuple[int, int]) -> Tile:
        return self.tiles[pos[0]][pos[1]]

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width

    def _cells(self, kind: TileKind) -> list[tuple[Position, Tile]]:
        return [
            (Position(r, c), t)
            for r, row in enumerate(self.tiles)
            for c, t in enumerate(row)
            if t.kind is kind
        ]

    @cached_property
    def starts(self) -> tuple[Position, ...]:
        found = {t.agent: p for p, t in self._cells(TileKind.START)}
        return tuple(found[i] for i in range(len(found)))

    @property
    def n_agents(self) -> int:
        return len(self.starts)

    @cached_property
    def gems(self) -> tuple[Position, ...]:
        return tuple(p for p, _ in self._cells(TileKind.GEM))

    @cached_property
    def exits(self) -> tuple[Position, ...]:
        return tuple(p for p, _ in self._cells(TileKind.EXIT))

    @cached_property
    def walls(self) -> tuple[Position, ...]:
        return tuple(p for p, _ in self._cells(TileKind.WALL))

    @cached_property
    def sources(self) -> tuple[LaserSource, ...]:
        return tuple(LaserSource(p, t.color, t.direction) for p, t in self._cells(TileKind.SOURCE))

    @property
    def unmatched_sources(self) -> tuple[LaserSource, ...]:
        """Sources whose color no agent has: their beams can never be blocked."""
        return tuple(s for s in self.sources if s.color >= self.n_agents)

    @property
    def n_gems(self) -> int:
        return len(self.gems)

    @property
    def n_lasers(self) -> int:
        return len(self.sources)


def _validate(spec: MapSpec) -> None:
    if spec.height < 1 or spec.width < 1:
        raise MapFormatError("map must have at least one row and one column")
    if len(spec.tiles) != spec.height:
        raise MapFormatError(f"expected {spec.height} rows, got {len(spec.tiles)}")
    seen: dict[int, Position] = {}
    n_exits = 0
    for r, row in enumerate(spec.tiles):
        if len(row) != spec.width:
            raise MapFormatError(f"ragged row: expected {spec.width} cells, got {len(row)}", r, len(row))
        for c, t in enumerate(row):
            if t.kind is TileKind.START:
                if t.agent is None or t.agent < 0:
                    raise MapFormatError("start tile without agent id", r, c)
                if t.agent in seen:
                    raise MapFormatError(f"duplicate start for agent {t.agent}", r, c)
                seen[t.agent] = Position(r, c)
            elif t.kind is TileKind.SOURCE:
                if t.color is None or t.color < 0 or t.direction is None:
                    raise MapFormatError("laser source needs a color and a direction", r, c)
            elif t.kind is TileKind.EXIT:
                n_exits += 1
    if not seen:
        raise MapFormatError("map has no agents")
    missing = sorted(set(range(max(seen) + 1)) - set(seen))
    if missing:
        raise MapFormatError(f"missing start tiles for agent ids {missing}")
    if n_exits < len(seen):
        raise MapFormatError(f"{n_exits} exit tiles for {len(seen)} agents")


def _parse_token(token: str, r: int, c: int) -> Tile:
    if token in _SIMPLE:
        return _SIMPLE[token]
    m = _START_RE.fullmatch(token)
    if m:
        return start(int(m.group(1)))
    m = _SOURCE_RE.fullmatch(token)
    if m:
        try:
            direction = Direction(m.group(2))
        except ValueError:
            raise MapFormatError(f"invalid direction {m.group(2)!r} in {token!r}", r, c) from None
        return source(int(m.group(1)), direction)
    raise MapFormatError(f"unknown token {token!r}", r, c)


def parse_map(text: str) -> MapSpec:
    rows = [line.split() for line in text.splitlines()]
    rows = [row for row in rows if row]
    if not rows:
        raise MapFormatError("empty map")
    width = len(rows[0])
    tiles = []
    for r, row in enumerate(rows):
        if len(row) != width:
            raise MapFormatError(f"ragged row: expected {width} tokens, got {len(row)}", r, min(len(row), width))
        tiles.append(tuple(_parse_token(tok, r, c) for c, tok in enumerate(row)))
    return MapSpec(width=width, height=len(rows), tiles=tuple(tiles))


def _token(tile: Tile) -> str:
    if tile.kind is TileKind.START:
        return f"S{tile.agent}"
    if tile.kind is TileKind.SOURCE:
        return f"L{tile.color}{tile.direction.value}"
    for tok, t in _SIMPLE.items():
        if t == tile:
            return tok
    raise MapFormatError(f"cannot serialize {tile!r}")


def serialize_map(spec: MapSpec) -> str:
    return "".join(" ".join(_token(t) for t in row) + "\n" for row in spec.tiles)


def load_map(name_or_path: str) -> MapSpec:
    """Resolve a map given as a level number, an embedded name or a file path."""
    if name_or_path.isdigit():
        return load_level(int(name_or_path))
    if name_or_path in embedded_names():
        return parse_map(_read_embedded(name_or_path))
    with open(name_or_path, encoding="utf-8") as f:
        return parse_map(f.read())


def load_level(k: int) -> MapSpec:
    if not 1 <= k <= N_LEVELS:
        raise ValueError(f"level must be in 1..{N_LEVELS}, got {k}")
    return parse_map(_read_embedded(f"level{k}"))


def load_toy() -> MapSpec:
    """Two agents, one red laser and two gems: red must block while yellow crosses."""
    return parse_map(_read_embedded("toy"))


def embedded_names() -> list[str]:
    files = resources.files(__package__).joinpath("levels")
    return sorted(p.name[: -len(".lle")] for p in files.iterdir() if p.name.endswith(".lle"))


def _read_embedded(name: str) -> str:
    return resources.files(__package__).joinpath("levels").joinpath(f"{name}.lle").read_text(encoding="utf-8")
