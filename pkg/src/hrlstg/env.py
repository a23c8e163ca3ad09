"""Deterministic blocks-world gridworld.

States are immutable values; ``step`` returns a new state and never touches
its input. Blocks live in stacks of height at most 2 on floor cells, and a
cell holding any block is impassable.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum
from functools import cached_property, lru_cache
from typing import NamedTuple, Optional

import numpy as np

from .tasks import COLORS, N_COLORS, Skill, Task

FLOOR, WALL, DOOR = ".", "#", "+"
MAX_STACK = 2
LAYOUTS = ("two_rooms", "big_room", "single_room")


class ConfigError(ValueError):
    """Invalid environment configuration or impossible placement."""


class Facing(IntEnum):
    N = 0
    E = 1
    S = 2
    W = 3


_DELTAS = ((-1, 0), (0, 1), (1, 0), (0, -1))
_ARROWS = "^>v<"


class Action(IntEnum):
    MOVE_FORWARD = 0
    MOVE_BACKWARD = 1
    MOVE_LEFT = 2
    MOVE_RIGHT = 3
    TURN_LEFT = 4
    TURN_RIGHT = 5
    PICK_UP = 6
    PUT_DOWN = 7

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", " ")


N_ACTIONS = len(Action)
# heading offset of each move relative to the agent's facing
_MOVE_OFFSET = {Action.MOVE_FORWARD: 0, Action.MOVE_RIGHT: 1,
                Action.MOVE_BACKWARD: 2, Action.MOVE_LEFT: 3}


class Pose(NamedTuple):
    row: int
    col: int
    facing: int

    def front(self) -> tuple[int, int]:
        dr, dc = _DELTAS[self.facing]
        return self.row + dr, self.col + dc


class Event(NamedTuple):
    kind: str = "none"  # "none" | "pickup" | "putdown"
    item: int = -1
    height: int = 0


NO_EVENT = Event()


@dataclass(frozen=True)
class Cell:
    kind: str
    stack: tuple[int, ...] = ()


@dataclass(frozen=True)
class Layout:
    """Static wall/door/floor map plus the floor cells of each room."""

    name: str
    rows: tuple[str, ...]
    rooms: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def height(self) -> int:
        return len(self.rows)

    @property
    def width(self) -> int:
        return len(self.rows[0])

    def kind(self, r: int, c: int) -> str:
        if 0 <= r < self.height and 0 <= c < self.width:
            return self.rows[r][c]
        return WALL

    @staticmethod
    def single_room(height: int, width: int, name: str = "single_room") -> "Layout":
        rows = [WALL * (width + 2)]
        rows += [WALL + FLOOR * width + WALL for _ in range(height)]
        rows.append(WALL * (width + 2))
        cells = tuple((r, c) for r in range(1, height + 1) for c in range(1, width + 1))
        return Layout(name, tuple(rows), (cells,))

    @staticmethod
    def two_rooms(size: int, wall: bool = True) -> "Layout":
        width = 2 * size + 1
        grid = [[FLOOR] * (width + 2) for _ in range(size + 2)]
        for r in range(size + 2):
            grid[r][0] = grid[r][-1] = WALL
        for c in range(width + 2):
            grid[0][c] = grid[-1][c] = WALL
        mid = size + 1
        if wall:
            for r in range(1, size + 1):
                grid[r][mid] = WALL
            grid[size // 2 + 1][mid] = DOOR
            left = tuple((r, c) for r in range(1, size + 1) for c in range(1, mid))
            right = tuple((r, c) for r in range(1, size + 1) for c in range(mid + 1, width + 1))
            rooms = (left, right)
            name = "two_rooms"
        else:
            rooms = (tuple((r, c) for r in range(1, size + 1) for c in range(1, width + 1)),)
            name = "big_room"
        return Layout(name, tuple("".join(row) for row in grid), rooms)


@lru_cache(maxsize=None)
def make_layout(kind: str, room_size: int) -> Layout:
    if kind == "single_room":
        return Layout.single_room(room_size, room_size)
    if kind == "two_rooms":
        return Layout.two_rooms(room_size, wall=True)
    if kind == "big_room":
        return Layout.two_rooms(room_size, wall=False)
    raise ConfigError(f"unknown layout {kind!r}; expected one of {LAYOUTS}")


@dataclass(frozen=True)
class EnvConfig:
    layout: str = "two_rooms"
    room_size: int = 7
    colors_in_play: tuple[int, ...] = tuple(range(N_COLORS))
    blocks_per_episode: int = 1
    distractors: bool = False
    max_steps: int = 100
    base_max_steps: Optional[int] = None
    max_primitive_steps: Optional[int] = None

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ConfigError(f"unknown layout {self.layout!r}; expected one of {LAYOUTS}")
        if self.room_size < 5 or self.room_size % 2 == 0:
            raise ConfigError(f"room_size must be an odd integer >= 5, got {self.room_size}")
        colors = tuple(int(c) for c in self.colors_in_play)
        if not colors or len(set(colors)) != len(colors) or any(not 0 <= c < N_COLORS for c in colors):
            raise ConfigError(f"bad colors_in_play {self.colors_in_play!r}")
        object.__setattr__(self, "colors_in_play", colors)
        if self.blocks_per_episode < 1:
            raise ConfigError("blocks_per_episode must be >= 1")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        for name in ("base_max_steps", "max_primitive_steps"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"{name} must be >= 1 or none")
        if self.blocks_per_episode + 1 > self.room_size ** 2:
            raise ConfigError("blocks_per_episode exceeds free floor cells")

    def make_layout(self) -> Layout:
        return make_layout(self.layout, self.room_size)

    @property
    def budgets(self) -> dict:
        """Rollout keyword arguments bounding delegated and total primitive steps."""
        return {"base_T": self.base_max_steps, "max_primitive_steps": self.max_primitive_steps}


@dataclass(frozen=True)
class WorldState:
    layout: Layout
    stacks: tuple[tuple[tuple[int, int], tuple[int, ...]], ...]  # sorted, non-empty stacks only
    agent: Pose
    held: Optional[int] = None
    last_event: Event = NO_EVENT
    step_count: int = 0

    @cached_property
    def stack_map(self) -> dict[tuple[int, int], tuple[int, ...]]:
        return dict(self.stacks)

    def stack_at(self, r: int, c: int) -> tuple[int, ...]:
        return self.stack_map.get((r, c), ())

    def cell(self, r: int, c: int) -> Cell:
        return Cell(self.layout.kind(r, c), self.stack_at(r, c))

    def front_stack(self) -> tuple[int, ...]:
        return self.stack_at(*self.agent.front())

    def grid_blocks(self) -> list[int]:
        return [item for _, stack in self.stacks for item in stack]

    def count_blocks(self) -> int:
        return sum(len(stack) for _, stack in self.stacks) + (self.held is not None)

    def key(self) -> tuple:
        """Hashable identity ignoring the step counter."""
        return (self.stacks, self.agent, self.held, self.last_event)


def _with_stack(stacks, pos, new_stack):
    d = dict(stacks)
    if new_stack:
        d[pos] = new_stack
    else:
        d.pop(pos, None)
    return tuple(sorted(d.items()))


def required_target_blocks(task: Task) -> int:
    return 2 if task.skill == Skill.STACK else 1


def reset(config: EnvConfig, task: Task, seed: int) -> WorldState:
    """Place blocks and the agent inside one randomly chosen room."""
    if task.item not in config.colors_in_play:
        raise ConfigError(f"task color {task.color} not in colors_in_play")
    layout = config.make_layout()
    rng = np.random.default_rng(seed)
    room = layout.rooms[int(rng.integers(len(layout.rooms)))]
    n_target = required_target_blocks(task)
    colors = [task.item] * n_target
    if config.distractors:
        extra = max(config.blocks_per_episode - n_target, 0)
        palette = np.array(config.colors_in_play)
        colors += [int(c) for c in rng.choice(palette, size=extra)]
    if len(colors) + 1 > len(room):
        raise ConfigError(f"cannot place {len(colors)} blocks and the agent in a room of {len(room)} cells")
    picks = rng.choice(len(room), size=len(colors) + 1, replace=False)
    r, c = room[picks[0]]
    agent = Pose(int(r), int(c), int(rng.integers(4)))
    stacks = tuple(sorted((room[p], (col,)) for p, col in zip(picks[1:], colors)))
    return WorldState(layout, stacks, agent)


def _passable(state: WorldState, r: int, c: int) -> bool:
    return state.layout.kind(r, c) != WALL and (r, c) not in state.stack_map


def step(state: WorldState, action) -> WorldState:
    action = Action(action)
    agent = state.agent
    stacks, held, event = state.stacks, state.held, NO_EVENT
    if action in _MOVE_OFFSET:
        dr, dc = _DELTAS[(agent.facing + _MOVE_OFFSET[action]) % 4]
        r, c = agent.row + dr, agent.col + dc
        if _passable(state, r, c):
            agent = Pose(r, c, agent.facing)
    elif action == Action.TURN_LEFT:
        agent = Pose(agent.row, agent.col, (agent.facing - 1) % 4)
    elif action == Action.TURN_RIGHT:
        agent = Pose(agent.row, agent.col, (agent.facing + 1) % 4)
    elif action == Action.PICK_UP:
        front = agent.front()
        stack = state.stack_at(*front)
        if held is None and stack:
            held = stack[-1]
            stacks = _with_stack(stacks, front, stack[:-1])
            event = Event("pickup", held, 0)
    elif action == Action.PUT_DOWN:
        front = agent.front()
        stack = state.stack_at(*front)
        if held is not None and state.layout.kind(*front) == FLOOR and len(stack) < MAX_STACK:
            new_stack = stack + (held,)
            stacks = _with_stack(stacks, front, new_stack)
            event = Event("putdown", held, len(new_stack))
            held = None
    return WorldState(state.layout, stacks, agent, held, event, state.step_count + 1)


def goal_reached(state: WorldState, task: Task) -> bool:
    x = task.item
    if task.skill == Skill.FIND:
        stack = state.front_stack()
        return bool(stack) and stack[-1] == x
    if task.skill == Skill.GET:
        return state.held == x
    ev = state.last_event
    if task.skill == Skill.PUT:
        return ev.kind == "putdown" and ev.item == x
    return ev.kind == "putdown" and ev.item == x and ev.height == 2 and state.front_stack() == (x, x)


def instruction_executable(state: WorldState, task: Task) -> bool:
    x = task.item
    on_grid = state.grid_blocks().count(x)
    if task.skill == Skill.FIND:
        return on_grid >= 1
    if task.skill == Skill.GET:
        return on_grid >= 1 and state.held in (None, x)
    if task.skill == Skill.PUT:
        return state.held == x
    if state.held == x:
        return on_grid >= 1
    return state.held is None and on_grid >= 2


def reward(state_after: WorldState, task: Task) -> float:
    return 1.0 if goal_reached(state_after, task) else 0.0


def obs_dim(n_colors: int = N_COLORS) -> int:
    return 2 + 4 + (n_colors + 1) + (2 + 2 * n_colors) + 3 * n_colors + 3


OBS_DIM = obs_dim()


@lru_cache(maxsize=None)
def _doors(layout: Layout) -> tuple[tuple[int, int], ...]:
    return tuple((r, c) for r, row in enumerate(layout.rows) for c, ch in enumerate(row) if ch == DOOR)


def _egocentric(dr: int, dc: int, facing: int) -> tuple[int, int]:
    """World displacement as (ahead, to the right) of the agent."""
    fr, fc = _DELTAS[facing]
    rr, rc = _DELTAS[(facing + 1) % 4]
    return dr * fr + dc * fc, dr * rr + dc * rc


def observe(state: WorldState) -> np.ndarray:
    """Fixed-length symbolic encoding; every entry lies in [-1, 1].

    Displacements to the nearest stack top of each color and to the nearest
    door are egocentric (ahead, right) and scaled by the larger map extent.
    """
    C = N_COLORS
    layout = state.layout
    h, w = max(layout.height - 1, 1), max(layout.width - 1, 1)
    scale = max(h, w)
    a = state.agent
    obs = np.zeros(OBS_DIM)
    obs[0] = a.row / h
    obs[1] = a.col / w
    obs[2 + a.facing] = 1.0
    base = 6
    obs[base + (C if state.held is None else state.held)] = 1.0
    base += C + 1
    fr, fc = a.front()
    stack = state.stack_at(fr, fc)
    if stack:
        obs[base + 2 + (C if len(stack) == 2 else 0) + stack[-1]] = 1.0
    elif layout.kind(fr, fc) == WALL:
        obs[base + 1] = 1.0
    else:
        obs[base] = 1.0
    base += 2 + 2 * C
    best: dict[int, tuple[int, int, int]] = {}
    for (r, c), s in state.stacks:  # sorted row-major, so first minimum wins ties
        d = abs(r - a.row) + abs(c - a.col)
        color = s[-1]
        if color not in best or d < best[color][0]:
            best[color] = (d, r - a.row, c - a.col)
    for color, (_, dr, dc) in best.items():
        ahead, right = _egocentric(dr, dc, a.facing)
        obs[base + 3 * color] = ahead / scale
        obs[base + 3 * color + 1] = right / scale
        obs[base + 3 * color + 2] = 1.0
    base += 3 * C
    doors = _doors(layout)
    if doors:
        dr, dc = min(((r - a.row, c - a.col) for r, c in doors), key=lambda d: abs(d[0]) + abs(d[1]))
        ahead, right = _egocentric(dr, dc, a.facing)
        obs[base] = ahead / scale
        obs[base + 1] = right / scale
        obs[base + 2] = 1.0
    return obs


def render(state: WorldState, show_held: bool = False) -> str:
    """ASCII map: ``#`` wall, ``+`` door, ``.`` floor, color initial per block."""
    grid = [list(row) for row in state.layout.rows]
    for (r, c), s in state.stacks:
        ch = COLORS[s[-1]][0]
        grid[r][c] = ch.upper() if len(s) == 2 else ch
    grid[state.agent.row][state.agent.col] = _ARROWS[state.agent.facing]
    text = "\n".join("".join(row) for row in grid)
    if show_held:
        held = "empty" if state.held is None else COLORS[state.held]
        text += f"\nheld: {held}"
    return text


def parse_map(text: str, held: Optional[int] = None, name: str = "custom") -> WorldState:
    """Inverse of :func:`render` (uppercase letters become same-color pairs)."""
    initials = {color[0]: i for i, color in enumerate(COLORS)}
    rows, stacks, agent = [], {}, None
    for r, line in enumerate(text.strip("\n").splitlines()):
        row = []
        for c, ch in enumerate(line):
            if ch in _ARROWS:
                agent = Pose(r, c, _ARROWS.index(ch))
                row.append(FLOOR)
            elif ch.lower() in initials:
                item = initials[ch.lower()]
                stacks[(r, c)] = (item, item) if ch.isupper() else (item,)
                row.append(FLOOR)
            elif ch in (FLOOR, WALL, DOOR):
                row.append(ch)
            else:
                raise ValueError(f"unexpected map character {ch!r}")
        rows.append("".join(row))
    if agent is None:
        raise ValueError("map has no agent")
    floor = tuple((r, c) for r, row in enumerate(rows) for c, ch in enumerate(row) if ch == FLOOR)
    layout = Layout(name, tuple(rows), (floor,))
    return WorldState(layout, tuple(sorted(stacks.items())), agent, held)


def with_event(state: WorldState, event: Event) -> WorldState:
    return replace(state, last_event=event)
