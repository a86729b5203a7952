"""Level proposal mechanisms for the compared training methods.

dr_generate scatters random tiles on an empty grid, accel_edit makes
local tile retypes with start/goal repair, and propose() dispatches on
the method name, covering edit-based and latent-interpolation
generators behind one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .buffer import LevelBuffer
from .env import LevelParams, Tile, make_level, navigable_mask
from .vae import VaeModel, decode, interpolate_pairs, sample_latent, sample_level
from .wfc import GenerationError

METHODS = ("uniform", "plr", "dr", "rplr", "accel", "iced", "iced-el")

_EXTRA_TILES = (int(Tile.MOSS), int(Tile.WALL), int(Tile.LAVA))
MAX_EXTRA_TILES = 60
EDIT_RETYPE_STEPS = 3
_EDIT_ATTEMPTS = 8


def dr_generate(size: int, seed: int) -> LevelParams:
    """Empty grid, uniform distinct start/goal, then n ~ U{0..60} tile
    placements of uniformly chosen extra types at free cells."""
    if size < 3:
        raise ValueError("size must be at least 3")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(30,)))
    grid = np.zeros((size, size), dtype=np.int8)
    cells = size * size
    start_flat, goal_flat = (int(v) for v in rng.choice(cells, size=2, replace=False))
    free = np.setdiff1d(np.arange(cells), (start_flat, goal_flat))
    flat = grid.reshape(-1)
    for _ in range(int(rng.integers(0, MAX_EXTRA_TILES + 1))):
        # later placements may repaint a cell, so ≤ 60 cells end up non-empty
        flat[free[rng.integers(free.size)]] = _EXTRA_TILES[rng.integers(3)]
    return make_level(grid, divmod(start_flat, size), divmod(goal_flat, size))


def _place_marker(rng, nav: np.ndarray, exclude) -> tuple[int, int]:
    cand = np.argwhere(nav)
    if exclude is not None:
        keep = ~((cand[:, 0] == exclude[0]) & (cand[:, 1] == exclude[1]))
        cand = cand[keep]
    if cand.shape[0] == 0:
        raise GenerationError("edit left no navigable cell for a marker")
    r, c = cand[rng.integers(cand.shape[0])]
    return int(r), int(c)


def accel_edit(level: LevelParams, seed: int) -> LevelParams:
    """Five-step local edit: three random single-cell retypes, then two
    repair steps that re-place any marker whose cell became blocked."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(31,)))
    grid = level.grid.copy()
    h, w = grid.shape
    for _ in range(EDIT_RETYPE_STEPS):
        r, c = int(rng.integers(h)), int(rng.integers(w))
        grid[r, c] = int(rng.integers(4))
    nav = navigable_mask(grid)
    start = level.start if nav[level.start] else None
    goal = level.goal if nav[level.goal] else None
    if start is None:
        start = _place_marker(rng, nav, goal)
    if goal is None:
        goal = _place_marker(rng, nav, start)
    return make_level(grid, start, goal)


@dataclass
class ProposalContext:
    """Everything a proposal mechanism may need; unused fields stay None."""

    seed: int
    count: int = 8
    grid_size: int = 9
    buffer: LevelBuffer | None = None
    train_levels: list | None = None
    vae_model: VaeModel | None = None
    pairs: int = 4
    interpolations: int = 2
    slerp: bool = False


def _edit_with_retries(parent: LevelParams, rng) -> LevelParams | None:
    for _ in range(_EDIT_ATTEMPTS):
        try:
            return accel_edit(parent, int(rng.integers(1 << 31)))
        except GenerationError:
            continue
    return None


def _easy_parents(buffer: LevelBuffer) -> list[LevelParams]:
    """Edit candidates: the bottom half of scored entries, ties stable."""
    scored = [(e.score, i) for i, e in enumerate(buffer.entries)
              if e.score is not None]
    if not scored:
        return [e.level for e in buffer.entries]
    scored.sort(key=lambda t: t[0])
    half = scored[: (len(scored) + 1) // 2]
    return [buffer.entries[i].level for _, i in half]


def propose(method: str, context: ProposalContext) -> list[LevelParams]:
    """Batch of proposal levels for a generative method.

    The batch may come up short when edits or decoded layouts keep
    failing; every returned level satisfies the level invariants.
    """
    method = method.lower()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(np.random.SeedSequence(context.seed,
                                                       spawn_key=(32,)))

    if method in ("dr", "rplr"):
        return [dr_generate(context.grid_size, int(rng.integers(1 << 31)))
                for _ in range(context.count)]

    if method == "accel":
        if context.buffer is None or len(context.buffer) == 0:
            raise ValueError("accel proposals need a populated buffer")
        parents = _easy_parents(context.buffer)
        out = []
        for _ in range(context.count):
            parent = parents[int(rng.integers(len(parents)))]
            edited = _edit_with_retries(parent, rng)
            if edited is not None:
                out.append(edited)
        return out

    if method == "iced-el":
        if not context.train_levels:
            raise ValueError("iced-el proposals need the training levels")
        out = []
        for _ in range(context.count):
            parent = context.train_levels[int(rng.integers(len(context.train_levels)))]
            edited = _edit_with_retries(parent, rng)
            if edited is not None:
                out.append(edited)
        return out

    if method == "iced":
        if context.vae_model is None or not context.train_levels:
            raise ValueError("iced proposals need a VAE model and training levels")
        gaussians = interpolate_pairs(context.vae_model, context.train_levels,
                                      m=context.pairs, k=context.interpolations,
                                      seed=int(rng.integers(1 << 31)),
                                      slerp=context.slerp)
        out = []
        for g in gaussians:
            for _ in range(_EDIT_ATTEMPTS):
                z = sample_latent(g, rng).astype(np.float32)
                heads = decode(context.vae_model, z)
                try:
                    out.append(sample_level(heads, seed=int(rng.integers(1 << 31))))
                    break
                except GenerationError:
                    continue
        return out

    raise ValueError(f"method {method!r} does not generate proposals")


def method_defaults(method: str) -> dict:
    """Per-method knobs: replay rate, scoring rule, capacity, filters."""
    table = {
        "uniform": dict(replay_rate=1.0, scoring="none", buffer_capacity=512,
                        generative=False, filter_solved=False),
        "plr": dict(replay_rate=1.0, scoring="value_loss", buffer_capacity=512,
                    generative=False, filter_solved=False),
        "dr": dict(replay_rate=0.0, scoring="none", buffer_capacity=0,
                   generative=True, filter_solved=False),
        "rplr": dict(replay_rate=0.5, scoring="positive_value_loss",
                     buffer_capacity=4000, generative=True, filter_solved=False),
        "accel": dict(replay_rate=0.8, scoring="positive_value_loss",
                      buffer_capacity=4000, generative=True, filter_solved=False,
                      edit_rate=1.0),
        "iced": dict(replay_rate=1.0, scoring="value_loss", buffer_capacity=512,
                     generative=True, filter_solved=True),
        "iced-el": dict(replay_rate=1.0, scoring="value_loss",
                        buffer_capacity=512, generative=True, filter_solved=True),
    }
    method = method.lower()
    if method not in table:
        raise ValueError(f"unknown method {method!r}")
    return table[method]
