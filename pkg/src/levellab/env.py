"""Partially observable gridworld navigation environment.

A level is a rectangular grid of tiles plus a start and a goal cell. The
agent walks the grid under a 7-action interface (turn left, turn right,
move forward, four inert actions), observing only a 5x5 window of its
surroundings expressed in its own frame of reference, plus a one-hot
heading vector.

Tiles are either navigable (EMPTY, MOSS) or non-navigable (WALL, LAVA).
Walls block movement; lava can be stepped on but ends the episode with no
reward. Reaching the goal ends the episode with reward
``1 - 0.9 * (t / max_steps)``. Episodes also end with no reward after
``max_steps`` steps.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class Tile(enum.IntEnum):
    EMPTY = 0
    WALL = 1
    MOSS = 2
    LAVA = 3


NAVIGABLE_TILES = (Tile.EMPTY, Tile.MOSS)
NUM_TILE_TYPES = 4

# view geometry: 2 cells to each side, agent row plus 4 cells ahead
VIEW_DEPTH = 5
VIEW_WIDTH = 5
VIEW_CHANNELS = NUM_TILE_TYPES + 1  # tile one-hots + goal visibility

NUM_ACTIONS = 7
ACTION_LEFT = 0
ACTION_RIGHT = 1
ACTION_FORWARD = 2
# actions 3..6 are inert; they exist to keep the 7-action interface

NUM_HEADINGS = 4
# heading 0=N, 1=E, 2=S, 3=W; row grows southward
HEADING_VECS = ((-1, 0), (0, 1), (1, 0), (0, -1))


class InvalidLevelError(ValueError):
    """A level violates one of the structural invariants."""


class TerminalStepError(RuntimeError):
    """step() was called on a terminal state."""


@dataclass(frozen=True)
class LevelParams:
    """Parameters fully describing one level: tile grid plus start/goal."""

    grid: np.ndarray  # (H, W) int8 tile codes
    start: tuple[int, int]
    goal: tuple[int, int]

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def width(self) -> int:
        return self.grid.shape[1]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LevelParams)
            and self.start == other.start
            and self.goal == other.goal
            and np.array_equal(self.grid, other.grid)
        )

    def __hash__(self) -> int:
        return hash((self.grid.tobytes(), self.start, self.goal))


@dataclass(frozen=True)
class Observation:
    """Agent-centric view tensor plus heading one-hot.

    ``view[d, l, c]`` covers the cell ``d`` steps ahead and ``l - 2``
    steps to the agent's right (d=0 is the agent's own row). Channels
    0..3 one-hot the tile type, channel 4 flags the goal cell.
    Out-of-bounds cells read as WALL.
    """

    view: np.ndarray  # (VIEW_DEPTH, VIEW_WIDTH, VIEW_CHANNELS) float32
    heading: np.ndarray  # (NUM_HEADINGS,) float32

    def flat(self) -> np.ndarray:
        return np.concatenate([self.view.ravel(), self.heading])


@dataclass(frozen=True)
class EnvState:
    pos: tuple[int, int]
    heading: int
    t: int
    terminal: bool


def make_level(grid, start, goal) -> LevelParams:
    """Build a LevelParams from any array-like grid, validating invariants."""
    arr = np.ascontiguousarray(np.asarray(grid, dtype=np.int8))
    arr.setflags(write=False)
    level = LevelParams(grid=arr, start=tuple(start), goal=tuple(goal))
    validate_level(level)
    return level


def validate_level(level: LevelParams) -> None:
    """Raise InvalidLevelError naming the first violated invariant."""
    grid = level.grid
    if grid.ndim != 2 or grid.shape[0] < 1 or grid.shape[1] < 1:
        raise InvalidLevelError(f"grid must be a 2D matrix, got shape {grid.shape}")
    if not np.isin(grid, [int(t) for t in Tile]).all():
        raise InvalidLevelError("grid contains unknown tile codes")
    for name, cell in (("start", level.start), ("goal", level.goal)):
        r, c = cell
        if not (0 <= r < grid.shape[0] and 0 <= c < grid.shape[1]):
            raise InvalidLevelError(f"{name} {cell} lies outside the grid")
        if grid[r, c] not in NAVIGABLE_TILES:
            raise InvalidLevelError(f"{name} cell {cell} is not navigable")
    if level.start == level.goal:
        raise InvalidLevelError("start and goal must be distinct cells")


def navigable_mask(grid: np.ndarray) -> np.ndarray:
    return (grid == Tile.EMPTY) | (grid == Tile.MOSS)


def bfs_distances(grid: np.ndarray, source: tuple[int, int]) -> np.ndarray:
    """Shortest-path distances over navigable cells from ``source``.

    Returns a float array with np.inf on non-navigable or unreachable cells.
    """
    h, w = grid.shape
    nav = navigable_mask(grid)
    dist = np.full((h, w), np.inf)
    if not nav[source]:
        return dist
    dist[source] = 0.0
    queue = deque([source])
    while queue:
        r, c = queue.popleft()
        d = dist[r, c] + 1.0
        for dr, dc in HEADING_VECS:
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and nav[nr, nc] and d < dist[nr, nc]:
                dist[nr, nc] = d
                queue.append((nr, nc))
    return dist


def full_distance_map(grid: np.ndarray, goal: tuple[int, int]) -> np.ndarray:
    """Goal distance for every cell, including non-navigable ones.

    Navigable cells use the shortest navigable path. A non-navigable cell
    takes the distance of its nearest navigable cell (fewest grid steps;
    ties resolved toward the smaller goal distance) plus the step offset.
    """
    h, w = grid.shape
    nav = navigable_mask(grid)
    dist = bfs_distances(grid, goal)
    if not nav.any():
        return dist

    # hop[cell] = grid steps (through anything) to the nearest navigable cell
    hop = np.full((h, w), -1, dtype=np.int64)
    hop[nav] = 0
    frontier = nav.copy()
    k = 0
    while frontier.any():
        grown = frontier.copy()
        grown[1:, :] |= frontier[:-1, :]
        grown[:-1, :] |= frontier[1:, :]
        grown[:, 1:] |= frontier[:, :-1]
        grown[:, :-1] |= frontier[:, 1:]
        frontier = grown & (hop < 0)
        k += 1
        hop[frontier] = k

    # value flows along minimal-hop paths only: a cell at hop k takes the
    # min over its hop k-1 neighbors, so the nearest navigable cell decides
    # (ties toward the smaller goal distance), even when that value is inf
    for k in range(1, hop.max() + 1):
        vals = np.where(hop == k - 1, dist, np.inf)
        cand = np.full((h, w), np.inf)
        cand[1:, :] = np.minimum(cand[1:, :], vals[:-1, :])
        cand[:-1, :] = np.minimum(cand[:-1, :], vals[1:, :])
        cand[:, 1:] = np.minimum(cand[:, 1:], vals[:, :-1])
        cand[:, :-1] = np.minimum(cand[:, :-1], vals[:, 1:])
        layer = hop == k
        dist[layer] = cand[layer] + 1.0
    return dist


def solvable(level: LevelParams) -> bool:
    """True iff a navigable path connects start to goal."""
    return bool(np.isfinite(bfs_distances(level.grid, level.start)[level.goal]))


def _view_offsets() -> np.ndarray:
    # offsets[h, d, l] = world (dr, dc) for view cell (d, l) under heading h
    out = np.zeros((NUM_HEADINGS, VIEW_DEPTH, VIEW_WIDTH, 2), dtype=np.int64)
    for h, (fr, fc) in enumerate(HEADING_VECS):
        rr, rc = HEADING_VECS[(h + 1) % NUM_HEADINGS]  # agent's right
        for d in range(VIEW_DEPTH):
            for l in range(VIEW_WIDTH):
                lat = l - VIEW_WIDTH // 2
                out[h, d, l, 0] = d * fr + lat * rr
                out[h, d, l, 1] = d * fc + lat * rc
    return out


_VIEW_OFFSETS = _view_offsets()


class GridEnv:
    """One level instantiated as a steppable environment.

    Instances are independent; state is explicit so a single instance can
    drive many concurrent trajectories if needed.
    """

    def __init__(self, level: LevelParams, max_steps: int = 250):
        validate_level(level)
        self.level = level
        self.max_steps = int(max_steps)

    def reset(self, rng_seed: int) -> tuple[EnvState, Observation]:
        rng = np.random.default_rng(rng_seed)
        heading = int(rng.integers(NUM_HEADINGS))
        state = EnvState(pos=self.level.start, heading=heading, t=0, terminal=False)
        return state, self.render_observation(state)

    def step(self, state: EnvState, action: int) -> tuple[EnvState, Observation, float, bool]:
        if state.terminal:
            raise TerminalStepError("step() called on a terminal state")
        if not 0 <= action < NUM_ACTIONS:
            raise ValueError(f"action must be in 0..{NUM_ACTIONS - 1}, got {action}")

        grid = self.level.grid
        pos, heading = state.pos, state.heading
        if action == ACTION_LEFT:
            heading = (heading - 1) % NUM_HEADINGS
        elif action == ACTION_RIGHT:
            heading = (heading + 1) % NUM_HEADINGS
        elif action == ACTION_FORWARD:
            dr, dc = HEADING_VECS[heading]
            nr, nc = pos[0] + dr, pos[1] + dc
            in_bounds = 0 <= nr < grid.shape[0] and 0 <= nc < grid.shape[1]
            if in_bounds and grid[nr, nc] != Tile.WALL:
                pos = (nr, nc)
        # actions 3..6 deliberately change nothing

        t = state.t + 1
        reward = 0.0
        done = False
        if pos == self.level.goal:
            reward = 1.0 - 0.9 * (t / self.max_steps)
            done = True
        elif grid[pos] == Tile.LAVA:
            done = True
        elif t >= self.max_steps:
            done = True

        new_state = EnvState(pos=pos, heading=heading, t=t, terminal=done)
        return new_state, self.render_observation(new_state), reward, done

    def render_observation(self, state: EnvState) -> Observation:
        grid = self.level.grid
        h, w = grid.shape
        offs = _VIEW_OFFSETS[state.heading]
        rows = state.pos[0] + offs[..., 0]
        cols = state.pos[1] + offs[..., 1]
        inside = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
        tiles = np.where(
            inside, grid[rows.clip(0, h - 1), cols.clip(0, w - 1)], int(Tile.WALL)
        )
        view = np.zeros((VIEW_DEPTH, VIEW_WIDTH, VIEW_CHANNELS), dtype=np.float32)
        view[..., :NUM_TILE_TYPES] = tiles[..., None] == np.arange(NUM_TILE_TYPES)
        view[..., NUM_TILE_TYPES] = (
            inside & (rows == self.level.goal[0]) & (cols == self.level.goal[1])
        )
        heading = np.zeros(NUM_HEADINGS, dtype=np.float32)
        heading[state.heading] = 1.0
        return Observation(view=view, heading=heading)


# --- dataset serialization ------------------------------------------------
# Levels serialize as JSON records:
#   {"height": H, "width": W, "grid": [row-major tile codes 0-3],
#    "start": [r, c], "goal": [r, c]}


def level_to_record(level: LevelParams) -> dict:
    return {
        "height": level.height,
        "width": level.width,
        "grid": [int(t) for t in level.grid.ravel()],
        "start": [int(level.start[0]), int(level.start[1])],
        "goal": [int(level.goal[0]), int(level.goal[1])],
    }


def level_from_record(record: dict) -> LevelParams:
    h, w = int(record["height"]), int(record["width"])
    grid = np.asarray(record["grid"], dtype=np.int8).reshape(h, w)
    return make_level(grid, tuple(record["start"]), tuple(record["goal"]))


def save_levels(path, levels) -> None:
    payload = [level_to_record(lv) for lv in levels]
    Path(path).write_text(json.dumps(payload))


def load_levels(path) -> list[LevelParams]:
    payload = json.loads(Path(path).read_text())
    return [level_from_record(rec) for rec in payload]
