"""Layered state encoding.

Channels, in order: one position layer per agent, one beam layer per laser
color, walls, gems, exits. Beam layers hold ``1`` on lit cells and ``-1`` on
the source cells of that color; the walls layer also marks sources since
they cannot be entered. A blocking agent absorbs the beam, so its own cell
is not lit.
"""

from __future__ import annotations

import numpy as np

from .mapfmt import MapSpec
from .world import World, compute_beams


def encoding_shape(spec: MapSpec, n_agents: int | None = None) -> tuple[int, int, int]:
    n = spec.n_agents if n_agents is None else n_agents
    return (2 * n + 3, spec.height, spec.width)


def static_layers(spec: MapSpec) -> np.ndarray:
    """Layers that never change during an episode (source marks, walls, exits)."""
    n = spec.n_agents
    out = np.zeros(encoding_shape(spec), dtype=np.int8)
    walls, exits = 2 * n, 2 * n + 2
    for p in spec.walls:
        out[walls, p.row, p.col] = 1
    for src in spec.sources:
        out[walls, src.position.row, src.position.col] = 1
        if src.color < n:
            out[n + src.color, src.position.row, src.position.col] = -1
    for p in spec.exits:
        out[exits, p.row, p.col] = 1
    return out


def encode_state(world: World, static: np.ndarray | None = None) -> np.ndarray:
    """Encode ``world`` as an ``int8`` array of shape ``(2n + 3, height, width)``."""
    spec = world.map
    n = spec.n_agents
    out = static_layers(spec) if static is None else static.copy()
    positions = world.positions
    alive = world.alive
    for i, (p, a) in enumerate(zip(positions, alive)):
        if a:
            out[i, p.row, p.col] = 1
    beams = compute_beams(world)
    for color, beam, blocker in zip(beams.colors, beams.beams, beams.blockers):
        if color >= n:
            continue
        lit = beam[:-1] if blocker is not None else beam
        for p in lit:
            out[n + color, p.row, p.col] = 1
    for p in world.gems_remaining:
        out[2 * n + 1, p.row, p.col] = 1
    return out


class Encoder:
    """Caches the static layers of one map."""

    def __init__(self, spec: MapSpec):
        self.spec = spec
        self.static = static_layers(spec)
        self.shape = self.static.shape

    def __call__(self, world: World) -> np.ndarray:
        return encode_state(world, self.static)
