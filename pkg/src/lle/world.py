"""Simultaneous-move laser grid world.

A step runs in a fixed order: vertex conflicts are demoted to STAY, the
remaining moves are applied together, beams are recomputed from the new
positions, agents standing in a beam of another color die, then rewards are
computed. A death step pays ``-len(deaths)`` and nothing else.

Internally cells are flat indices ``row * width + col``; :class:`Dynamics`
holds the compiled transition rules and is shared with the solvability
search so both run exactly the same semantics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .mapfmt import MapSpec
from .tiles import N_ACTIONS, Action, Position

_NO_MOVE = -1


class InvalidActionError(ValueError):
    pass


class EpisodeDoneError(RuntimeError):
    pass


def max_score(spec: MapSpec) -> int:
    return spec.n_agents + spec.n_gems + 1


def time_limit(spec: MapSpec) -> int:
    """``width * height / 2`` rounded to nearest, halves rounded up."""
    return (spec.width * spec.height + 1) // 2


class Dynamics:
    """Transition rules of a map compiled to flat cell indices."""

    def __init__(self, spec: MapSpec):
        self.spec = spec
        self.width = spec.width
        self.n_agents = spec.n_agents
        w, h = spec.width, spec.height
        self.n_cells = w * h
        # moves[cell][action] -> target cell, or _NO_MOVE for walls, sources and edges
        self.moves: list[tuple[int, ...]] = []
        for r in range(h):
            for c in range(w):
                row = []
                for a in Action:
                    dr, dc = a.delta
                    nr, nc = r + dr, c + dc
                    if spec.in_bounds(nr, nc) and spec.tiles[nr][nc].walkable:
                        row.append(nr * w + nc)
                    else:
                        row.append(_NO_MOVE)
                self.moves.append(tuple(row))
        self.exits = frozenset(p.row * w + p.col for p in spec.exits)
        self.gems = tuple(p.row * w + p.col for p in spec.gems)
        # full span of each beam when nothing blocks it
        self.source_colors: list[int] = []
        self.lines: list[tuple[int, ...]] = []
        self.line_index: list[dict[int, int]] = []
        for src in spec.sources:
            dr, dc = src.direction.delta
            r, c = src.position.row + dr, src.position.col + dc
            line = []
            while spec.in_bounds(r, c) and spec.tiles[r][c].walkable:
                line.append(r * w + c)
                r, c = r + dr, c + dc
            self.source_colors.append(src.color)
            self.lines.append(tuple(line))
            self.line_index.append({cell: i for i, cell in enumerate(line)})

    def cell(self, pos: tuple[int, int]) -> int:
        return pos[0] * self.width + pos[1]

    def position(self, cell: int) -> Position:
        return Position(*divmod(cell, self.width))

    def available(self, cells: tuple[int, ...], agent: int) -> list[int]:
        here = cells[agent]
        if here in self.exits:
            return [Action.STAY]
        out = []
        for a, target in enumerate(self.moves[here]):
            if a == Action.STAY:
                out.append(a)
            elif target != _NO_MOVE and target not in cells:
                out.append(a)
        return out

    def beam_ends(self, cells: tuple[int, ...], alive: tuple[bool, ...] | None = None) -> list[int]:
        """Number of covered cells of each beam, counting a blocker's own cell."""
        ends = []
        for color, line, index in zip(self.source_colors, self.lines, self.line_index):
            end = len(line)
            if color < self.n_agents and (alive is None or alive[color]):
                i = index.get(cells[color])
                if i is not None:
                    end = i + 1
            ends.append(end)
        return ends

    def deaths(self, cells: tuple[int, ...]) -> list[int]:
        dead = []
        ends = self.beam_ends(cells)
        for agent, cell in enumerate(cells):
            for color, index, end in zip(self.source_colors, self.line_index, ends):
                if color == agent:
                    continue
                i = index.get(cell)
                if i is not None and i < end:
                    dead.append(agent)
                    break
        return dead

    def move(self, cells: tuple[int, ...], actions) -> tuple[int, ...]:
        """Apply a joint action with vertex-conflict demotion. Actions must be available."""
        targets = [self.moves[c][a] if a != Action.STAY else c for c, a in zip(cells, actions)]
        counts: dict[int, int] = {}
        for c, t in zip(cells, targets):
            if t != c:
                counts[t] = counts.get(t, 0) + 1
        return tuple(c if t != c and counts[t] > 1 else t for c, t in zip(cells, targets))

    def transition(self, cells: tuple[int, ...], actions) -> tuple[tuple[int, ...], list[int]]:
        new = self.move(cells, actions)
        return new, self.deaths(new)


@dataclass
class AgentState:
    position: Position
    color: int
    alive: bool = True
    arrived: bool = False


@dataclass(frozen=True)
class BeamMap:
    """Cells covered by each beam (ordered from the source outwards) and the colors covering each cell."""

    beams: tuple[tuple[Position, ...], ...]
    colors: tuple[int, ...]
    blockers: tuple[int | None, ...]

    @property
    def coverage(self) -> dict[Position, frozenset[int]]:
        out: dict[Position, set[int]] = {}
        for color, beam in zip(self.colors, self.beams):
            for p in beam:
                out.setdefault(p, set()).add(color)
        return {p: frozenset(c) for p, c in out.items()}


@dataclass
class StepOutcome:
    reward: float
    deaths: frozenset[int] = frozenset()
    gems_collected: frozenset[Position] = frozenset()
    exited: frozenset[int] = frozenset()
    episode_done: bool = False
    events: list[tuple] = field(default_factory=list)


class World:
    """Mutable simulation state of one episode on a :class:`MapSpec`."""

    def __init__(self, spec: MapSpec, dynamics: Dynamics | None = None):
        self.map = spec
        self.dynamics = dynamics or Dynamics(spec)
        self.reset()

    def reset(self) -> World:
        d = self.dynamics
        self._cells = tuple(d.cell(p) for p in self.map.starts)
        self._alive = [True] * self.map.n_agents
        self._gems = set(d.gems)
        self.step_count = 0
        self.done = False
        return self

    @property
    def n_agents(self) -> int:
        return self.map.n_agents

    @property
    def positions(self) -> list[Position]:
        return [self.dynamics.position(c) for c in self._cells]

    @property
    def alive(self) -> list[bool]:
        return list(self._alive)

    @property
    def arrived(self) -> list[bool]:
        exits = self.dynamics.exits
        return [a and c in exits for c, a in zip(self._cells, self._alive)]

    @property
    def agents(self) -> list[AgentState]:
        return [
            AgentState(p, i, alive, arrived)
            for i, (p, alive, arrived) in enumerate(zip(self.positions, self._alive, self.arrived))
        ]

    @property
    def gems_remaining(self) -> set[Position]:
        return {self.dynamics.position(c) for c in self._gems}

    @property
    def beams(self) -> BeamMap:
        return compute_beams(self)

    @property
    def exit_rate(self) -> float:
        return sum(self.arrived) / self.n_agents

    def get_state(self) -> tuple:
        """Hashable snapshot, restorable with :meth:`set_state`."""
        return (self._cells, tuple(self._alive), frozenset(self._gems), self.step_count, self.done)

    def set_state(self, state: tuple) -> None:
        cells, alive, gems, self.step_count, self.done = state
        self._cells = tuple(cells)
        self._alive = list(alive)
        self._gems = set(gems)

    def copy(self) -> World:
        other = World.__new__(World)
        other.map = self.map
        other.dynamics = self.dynamics
        other.set_state(self.get_state())
        return other

    def available_actions(self) -> list[list[Action]]:
        if not all(self._alive):
            return [[Action.STAY] for _ in self._cells]
        return [[Action(a) for a in self.dynamics.available(self._cells, i)] for i in range(self.n_agents)]

    def action_mask(self) -> list[list[bool]]:
        mask = [[False] * N_ACTIONS for _ in range(self.n_agents)]
        for i, avail in enumerate(self.available_actions()):
            for a in avail:
                mask[i][a] = True
        return mask

    def step(self, actions) -> StepOutcome:
        if self.done:
            raise EpisodeDoneError("cannot step a finished episode; call reset()")
        if len(actions) != self.n_agents:
            raise InvalidActionError(f"expected {self.n_agents} actions, got {len(actions)}")
        d = self.dynamics
        actions = [int(a) for a in actions]
        for i, a in enumerate(actions):
            if a not in d.available(self._cells, i):
                raise InvalidActionError(f"agent {i}: action {Action(a).name} is not available")
        was_arrived = self.arrived
        new_cells, dead = d.transition(self._cells, actions)
        self._cells = new_cells
        self.step_count += 1
        events: list[tuple] = []
        if dead:
            for i in dead:
                self._alive[i] = False
                events.append(("death", i, d.position(new_cells[i])))
            self.done = True
            return StepOutcome(-float(len(dead)), deaths=frozenset(dead), episode_done=True, events=events)

        reward = 0.0
        gems = set()
        exited = set()
        for i, cell in enumerate(new_cells):
            if cell in self._gems:
                self._gems.discard(cell)
                gems.add(d.position(cell))
                reward += 1.0
                events.append(("gem", i, d.position(cell)))
            if cell in d.exits and not was_arrived[i]:
                exited.add(i)
                reward += 1.0
                events.append(("exit", i, d.position(cell)))
        if all(self.arrived):
            reward += 1.0
            self.done = True
            events.append(("finish",))
        return StepOutcome(reward, frozenset(), frozenset(gems), frozenset(exited), self.done, events)


def reset(spec: MapSpec) -> World:
    return World(spec)


def compute_beams(world: World) -> BeamMap:
    d = world.dynamics
    cells = world._cells
    alive = tuple(world._alive)
    beams = []
    blockers = []
    for color, line, index, end in zip(d.source_colors, d.lines, d.line_index, d.beam_ends(cells, alive)):
        beams.append(tuple(d.position(c) for c in line[:end]))
        blocked = color < d.n_agents and alive[color] and cells[color] in index
        blockers.append(color if blocked else None)
    return BeamMap(tuple(beams), tuple(d.source_colors), tuple(blockers))


def step(world: World, joint_action) -> tuple[World, StepOutcome]:
    outcome = world.step(joint_action)
    return world, outcome
