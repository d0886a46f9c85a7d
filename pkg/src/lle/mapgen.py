"""Random solvable map generation and the joint-search solvability oracle."""

from __future__ import annotations

import itertools
import os
from collections import deque
from dataclasses import dataclass

import numpy as np

from .mapfmt import MapFormatError, MapSpec
from .tiles import EXIT, FLOOR, GEM, WALL, Action, Direction, source, start
from .world import Dynamics

DEFAULT_STATE_CAP = 10**7


class StateSpaceTooLarge(RuntimeError):
    pass


class GenerationExhausted(RuntimeError):
    pass


def state_cap() -> int:
    return int(os.environ.get("LLE_STATE_CAP", DEFAULT_STATE_CAP))


@dataclass
class SearchResult:
    solvable: bool
    plan: list[tuple[Action, ...]] | None
    coordination_depth: int | None
    n_states: int


def _coordinating(d: Dynamics, cells: tuple[int, ...]) -> bool:
    # some agent sits on its own beam with a teammate further along the same beam
    for color, index in zip(d.source_colors, d.line_index):
        if color >= d.n_agents:
            continue
        i = index.get(cells[color])
        if i is None:
            continue
        for j, cell in enumerate(cells):
            if j != color:
                k = index.get(cell)
                if k is not None and k > i:
                    return True
    return False


def search(spec: MapSpec, require_gems: bool = False, cap: int | None = None) -> SearchResult:
    """Breadth-first search over joint configurations with the simulator's exact rules.

    A state is the tuple of agent cells (arrival is implied by standing on an
    exit, which is absorbing) plus, when ``require_gems`` is set, the mask of
    gems still on the map. Transitions that kill an agent are dead ends.
    Among shortest plans, the one with the fewest coordination states is
    kept, which gives the coordination depth.
    """
    cap = state_cap() if cap is None else cap
    d = Dynamics(spec)
    n = spec.n_agents
    gem_bit = {cell: 1 << i for i, cell in enumerate(d.gems)} if require_gems else {}
    full_mask = (1 << len(gem_bit)) - 1

    start_cells = tuple(d.cell(p) for p in spec.starts)
    start_state = (start_cells, full_mask)
    dist = {start_state: 0}
    count = {start_state: int(_coordinating(d, start_cells))}
    parent: dict = {start_state: None}
    frontier = deque([start_state])
    goals = []
    goal_dist = None

    while frontier:
        state = frontier.popleft()
        cells, mask = state
        depth = dist[state]
        if goal_dist is not None and depth >= goal_dist:
            break
        if all(c in d.exits for c in cells):
            continue
        avail = [d.available(cells, i) for i in range(n)]
        for joint in itertools.product(*avail):
            new_cells = d.move(cells, joint)
            if d.deaths(new_cells):
                continue
            new_mask = mask
            if gem_bit:
                for c in new_cells:
                    new_mask &= ~gem_bit.get(c, 0)
            nxt = (new_cells, new_mask)
            c_next = count[state] + _coordinating(d, new_cells)
            seen = dist.get(nxt)
            if seen is None:
                if len(dist) >= cap:
                    raise StateSpaceTooLarge(f"joint state space exceeds {cap} states")
                dist[nxt] = depth + 1
                count[nxt] = c_next
                parent[nxt] = (state, joint)
                if all(c in d.exits for c in new_cells) and new_mask == 0:
                    goals.append(nxt)
                    goal_dist = depth + 1
                else:
                    frontier.append(nxt)
            elif seen == depth + 1 and c_next < count[nxt]:
                count[nxt] = c_next
                parent[nxt] = (state, joint)

    if start_state[1] == 0 and all(c in d.exits for c in start_cells):
        return SearchResult(True, [], count[start_state], len(dist))
    if not goals:
        return SearchResult(False, None, None, len(dist))
    best = min(goals, key=lambda s: count[s])
    plan = []
    node = best
    while parent[node] is not None:
        node, joint = parent[node]
        plan.append(tuple(Action(a) for a in joint))
    plan.reverse()
    return SearchResult(True, plan, count[best], len(dist))


def solvable(spec: MapSpec, cap: int | None = None) -> bool:
    return search(spec, cap=cap).solvable


def coordination_depth(spec: MapSpec, cap: int | None = None) -> int:
    """Fewest time steps spent blocking a beam for a teammate over all shortest solutions."""
    result = search(spec, cap=cap)
    if not result.solvable:
        raise ValueError("map is not solvable")
    return result.coordination_depth


@dataclass(frozen=True)
class GenParams:
    width: int
    height: int
    n_agents: int = 2
    n_gems: int = 1
    n_lasers: int = 1
    wall_density: float = 0.0
    min_coordination_steps: int = 0
    seed: int = 0
    max_attempts: int = 1000
    state_cap: int | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        if self.n_agents < 1 or self.n_gems < 0 or self.n_lasers < 0:
            raise ValueError("need at least one agent and non-negative gem/laser counts")
        if not 0.0 <= self.wall_density <= 1.0:
            raise ValueError(f"wall_density must be in [0, 1], got {self.wall_density}")
        if self.min_coordination_steps < 0:
            raise ValueError("min_coordination_steps must be >= 0")
        needed = 2 * self.n_agents + self.n_gems + self.n_lasers
        if needed > self.width * self.height:
            raise ValueError(f"{needed} special tiles do not fit in {self.width}x{self.height}")


_DIRECTIONS = list(Direction)


def sample_layout(params: GenParams, rng: np.random.Generator) -> MapSpec:
    w, h = params.width, params.height
    cells = rng.permutation(w * h)
    grid = [[FLOOR] * w for _ in range(h)]
    it = iter(int(c) for c in cells)
    for i in range(params.n_agents):
        r, c = divmod(next(it), w)
        grid[r][c] = start(i)
    for _ in range(params.n_agents):
        r, c = divmod(next(it), w)
        grid[r][c] = EXIT
    for _ in range(params.n_gems):
        r, c = divmod(next(it), w)
        grid[r][c] = GEM
    for _ in range(params.n_lasers):
        r, c = divmod(next(it), w)
        color = int(rng.integers(params.n_agents))
        grid[r][c] = source(color, _DIRECTIONS[int(rng.integers(4))])
    for cell in it:
        if rng.random() < params.wall_density:
            r, c = divmod(cell, w)
            grid[r][c] = WALL
    return MapSpec(width=w, height=h, tiles=tuple(tuple(row) for row in grid))


def generate(params: GenParams) -> MapSpec:
    """Sample layouts until the oracle certifies one: all agents can exit, all gems
    are collectable and enough coordination steps are required."""
    rng = np.random.default_rng(params.seed)
    for _ in range(params.max_attempts):
        try:
            spec = sample_layout(params, rng)
        except MapFormatError:
            continue
        try:
            result = search(spec, cap=params.state_cap)
            if not result.solvable or result.coordination_depth < params.min_coordination_steps:
                continue
            if spec.n_gems and not search(spec, require_gems=True, cap=params.state_cap).solvable:
                continue
        except StateSpaceTooLarge:
            continue
        return spec
    raise GenerationExhausted(f"no valid map after {params.max_attempts} attempts for {params}")
