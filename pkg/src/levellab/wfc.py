"""Constraint-based level generation.

Layouts are produced by a simple tiled wave function collapse: every cell
starts in a superposition of the base pattern's symbols, the cell with the
fewest remaining options is collapsed first (ties broken at random, symbol
drawn by template frequency), and arc consistency is restored after every
collapse. A contradiction restarts the whole grid; restarts are bounded.

The collapsed symbol grid maps down to a wall/empty layout, which is then
cleaned (largest navigable component), given start and goal positions, and
decorated with moss and lava whose placement probability follows a logistic
curve in normalized goal distance. With the default sign, moss concentrates
near the goal and lava far from it.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .env import (
    InvalidLevelError,
    LevelParams,
    Tile,
    bfs_distances,
    full_distance_map,
    make_level,
    navigable_mask,
    solvable,
)
from .patterns import EDGE_PATTERN_NAMES, PATTERN_SPECS, TRAIN_PATTERN_NAMES

_DIRS = ((-1, 0), (0, 1), (1, 0), (0, -1))  # N, E, S, W


class GenerationError(RuntimeError):
    """Raised when level generation exhausts its retry budget."""


class BasePattern:
    """A tile template plus the adjacency rules extracted from it.

    ``allowed[d][a, b]`` is True when symbol ``b`` may sit in direction
    ``d`` of symbol ``a``. The rule set is exactly the set of adjacencies
    present in the template, per direction.
    """

    def __init__(self, name: str, template_text: str, wall_chars: str):
        rows = [line.strip() for line in template_text.strip().splitlines()]
        rows = [r for r in rows if r]
        if not rows or len({len(r) for r in rows}) != 1:
            raise ValueError("pattern template must be rectangular")
        self.name = name
        self.symbols: tuple[str, ...] = tuple(sorted({c for r in rows for c in r}))
        if len(self.symbols) > 16:
            raise ValueError("pattern alphabet too large")
        index = {c: i for i, c in enumerate(self.symbols)}
        k = len(self.symbols)
        h, w = len(rows), len(rows[0])
        self.template = np.array([[index[c] for c in r] for r in rows], dtype=np.int8)
        self.template_shape = (h, w)
        self.wall_mask = np.array([c in wall_chars for c in self.symbols])

        counts = np.bincount(self.template.ravel(), minlength=k).astype(np.float64)
        self.weights = counts / counts.sum()

        self.allowed = [np.zeros((k, k), dtype=bool) for _ in _DIRS]
        for d, (dr, dc) in enumerate(_DIRS):
            for r in range(h):
                for c in range(w):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w:
                        self.allowed[d][self.template[r, c], self.template[rr, cc]] = True

        # support[d][a] = bitmask of symbols allowed in direction d of a;
        # union_support[d][m] extends that to a whole domain bitmask m
        self.support = [
            np.array([int(sum(1 << b for b in range(k) if al[a, b])) for a in range(k)],
                     dtype=np.uint32)
            for al in self.allowed
        ]
        self.union_support = []
        for d in range(4):
            table = np.zeros(1 << k, dtype=np.uint32)
            for m in range(1, 1 << k):
                low = (m & -m).bit_length() - 1
                table[m] = table[m & (m - 1)] | self.support[d][low]
            self.union_support.append(table)

    def layout_from_symbols(self, symbols: np.ndarray) -> np.ndarray:
        """Map a collapsed symbol grid to a wall/empty tile grid."""
        return np.where(self.wall_mask[symbols], Tile.WALL, Tile.EMPTY).astype(np.int8)


_PATTERN_CACHE: dict[str, BasePattern] = {}


def get_pattern(name: str) -> BasePattern:
    if name not in _PATTERN_CACHE:
        if name not in PATTERN_SPECS:
            raise KeyError(f"unknown base pattern {name!r}")
        text, walls = PATTERN_SPECS[name]
        _PATTERN_CACHE[name] = BasePattern(name, text, walls)
    return _PATTERN_CACHE[name]


def pattern_names() -> tuple[str, ...]:
    return tuple(PATTERN_SPECS)


@dataclass(frozen=True)
class GenConfig:
    """Level generation settings.

    ``moss_weight`` and ``lava_weight`` are the steepness of the logistic
    distance curves; ``invert_correlation`` flips which end of the level
    each context tile favors.
    """

    size: int = 9
    patterns: tuple[str, ...] = TRAIN_PATTERN_NAMES
    moss_density: float = 0.3
    lava_density: float = 0.2
    moss_weight: float = 8.0
    lava_weight: float = 8.0
    invert_correlation: bool = False
    seed: int = 0
    max_attempts: int = 50

    def __post_init__(self):
        if not self.patterns:
            raise ValueError("GenConfig.patterns must not be empty")
        for p in self.patterns:
            pat = get_pattern(p)
            if self.size < max(pat.template_shape):
                raise ValueError(f"size {self.size} smaller than pattern {p!r}")
        for name in ("moss_density", "lava_density"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


def collapse_symbols(pattern: BasePattern, size: int,
                     seed: int | np.random.Generator,
                     max_restarts: int = 100) -> np.ndarray:
    """Collapse a size x size grid of pattern symbols.

    Returns an int8 grid of symbol indices. Raises GenerationError when
    every attempt within the restart budget hits a contradiction.
    """
    rng = np.random.default_rng(seed)
    k = len(pattern.symbols)
    full = np.uint32((1 << k) - 1)
    if k == 1:
        return np.zeros((size, size), dtype=np.int8)

    for _ in range(max_restarts):
        domains = np.full((size, size), full, dtype=np.uint32)
        counts = np.full((size, size), k, dtype=np.int16)
        ok = True
        while True:
            open_mask = counts > 1
            if not open_mask.any():
                break
            m = counts[open_mask].min()
            cand = np.argwhere(open_mask & (counts == m))
            r, c = cand[rng.integers(len(cand))]
            dom = int(domains[r, c])
            opts = [b for b in range(k) if dom >> b & 1]
            w = pattern.weights[opts]
            pick = opts[rng.choice(len(opts), p=w / w.sum())]
            domains[r, c] = np.uint32(1 << pick)
            counts[r, c] = 1
            if not _propagate(pattern, domains, counts, (int(r), int(c))):
                ok = False
                break
        if ok:
            out = np.zeros((size, size), dtype=np.int8)
            for b in range(k):
                out[domains == np.uint32(1 << b)] = b
            return out
    raise GenerationError(
        f"pattern {pattern.name!r} contradicted {max_restarts} times at size {size}")


def _propagate(pattern: BasePattern, domains: np.ndarray, counts: np.ndarray,
               origin: tuple[int, int]) -> bool:
    """Restore arc consistency after a collapse. False on contradiction."""
    size_r, size_c = domains.shape
    queue = deque([origin])
    while queue:
        r, c = queue.popleft()
        dom = int(domains[r, c])
        for d, (dr, dc) in enumerate(_DIRS):
            rr, cc = r + dr, c + dc
            if not (0 <= rr < size_r and 0 <= cc < size_c):
                continue
            new = domains[rr, cc] & pattern.union_support[d][dom]
            if new == domains[rr, cc]:
                continue
            if new == 0:
                return False
            domains[rr, cc] = new
            counts[rr, cc] = int(new).bit_count()
            queue.append((rr, cc))
    return True


def satisfies_adjacency(pattern: BasePattern, symbols: np.ndarray) -> bool:
    """Check every adjacent cell pair against the pattern's rules."""
    for d, (dr, dc) in enumerate(_DIRS):
        if dr == -1:
            a, b = symbols[1:, :], symbols[:-1, :]
        elif dr == 1:
            a, b = symbols[:-1, :], symbols[1:, :]
        elif dc == 1:
            a, b = symbols[:, :-1], symbols[:, 1:]
        else:
            a, b = symbols[:, 1:], symbols[:, :-1]
        if not pattern.allowed[d][a, b].all():
            return False
    return True


def wfc_collapse(pattern: BasePattern, size: int,
                 seed: int | np.random.Generator,
                 max_restarts: int = 100) -> np.ndarray:
    """Generate a wall/empty layout from a base pattern."""
    return pattern.layout_from_symbols(collapse_symbols(pattern, size, seed, max_restarts))


def finalize_layout(layout: np.ndarray) -> np.ndarray:
    """Keep the largest 4-connected navigable component, wall off the rest."""
    nav = navigable_mask(layout)
    if not nav.any():
        raise InvalidLevelError("layout has no navigable cells")
    labels, n = ndimage.label(nav)
    if n > 1:
        sizes = np.bincount(labels.ravel())
        sizes[0] = 0
        keep = sizes.argmax()
        out = layout.copy()
        out[nav & (labels != keep)] = Tile.WALL
        return out
    return layout.copy()


def place_start_goal(layout: np.ndarray,
                     seed: int | np.random.Generator) -> tuple[tuple[int, int], tuple[int, int]]:
    """Pick a goal uniformly, then a start at median geodesic distance.

    The median is the lower median of the goal distances of every other
    reachable navigable cell, so a five-cell corridor with the goal at one
    end puts the start exactly two steps away.
    """
    rng = np.random.default_rng(seed)
    nav = np.argwhere(navigable_mask(layout))
    if len(nav) < 2:
        raise InvalidLevelError("layout needs at least two navigable cells")
    goal = tuple(int(x) for x in nav[rng.integers(len(nav))])
    dist = bfs_distances(layout, goal)
    dist[goal] = np.inf
    ds = dist[tuple(nav.T)]
    ds = ds[np.isfinite(ds)]
    if len(ds) == 0:
        raise InvalidLevelError("goal cell is isolated")
    median = np.sort(ds)[(len(ds) - 1) // 2]
    cand = np.argwhere(np.isfinite(dist) & (dist == median))
    start = tuple(int(x) for x in cand[rng.integers(len(cand))])
    return start, goal


def sample_context_tiles(layout: np.ndarray, start: tuple[int, int],
                         goal: tuple[int, int], cfg: GenConfig,
                         seed: int | np.random.Generator) -> LevelParams:
    """Scatter moss over floor and lava over walls, correlated with distance.

    Placement probability is density * sigmoid(weight * (0.5 - d)) with d
    the goal distance normalized to [0, 1]; lava uses the opposite sign, so
    by default moss thins out and lava thickens away from the goal.
    """
    rng = np.random.default_rng(seed)
    dist = full_distance_map(layout, goal)
    finite = np.isfinite(dist)
    dmax = dist[finite].max()
    dn = np.where(finite, dist / max(dmax, 1.0), 1.0)

    moss_arg = 0.5 - dn
    lava_arg = dn - 0.5
    if cfg.invert_correlation:
        moss_arg, lava_arg = lava_arg, moss_arg
    p_moss = cfg.moss_density / (1.0 + np.exp(-cfg.moss_weight * moss_arg))
    p_lava = cfg.lava_density / (1.0 + np.exp(-cfg.lava_weight * lava_arg))

    grid = layout.copy()
    draw = rng.random(grid.shape)
    grid[(layout == Tile.EMPTY) & (draw < p_moss)] = Tile.MOSS
    grid[(layout == Tile.WALL) & (draw < p_lava)] = Tile.LAVA
    return make_level(grid, start, goal)


def generate_level(cfg: GenConfig, pattern_name: str,
                   seed: int | np.random.SeedSequence) -> LevelParams:
    """Run the full pipeline once: collapse, cleanup, placement, context."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_collapse, s_place, s_tiles = ss.spawn(3)
    pattern = get_pattern(pattern_name)
    layout = finalize_layout(wfc_collapse(pattern, cfg.size, np.random.default_rng(s_collapse)))
    start, goal = place_start_goal(layout, np.random.default_rng(s_place))
    level = sample_context_tiles(layout, start, goal, cfg, np.random.default_rng(s_tiles))
    if not solvable(level):
        raise GenerationError("generated level is unsolvable")
    return level


def generate_dataset(cfg: GenConfig, count: int) -> list[LevelParams]:
    """Generate ``count`` levels, round-robin over the configured patterns.

    Failed attempts (contradiction budgets, degenerate layouts) are
    resampled with fresh seeds; a level that stays infeasible after
    ``cfg.max_attempts`` tries aborts the run with diagnostics.
    """
    levels: list[LevelParams] = []
    failures: dict[str, int] = {}
    for i in range(count):
        name = cfg.patterns[i % len(cfg.patterns)]
        level = None
        for attempt in range(cfg.max_attempts):
            ss = np.random.SeedSequence(cfg.seed, spawn_key=(i, attempt))
            try:
                level = generate_level(cfg, name, ss)
                break
            except (GenerationError, InvalidLevelError):
                failures[name] = failures.get(name, 0) + 1
        if level is None:
            raise GenerationError(
                f"level {i} (pattern {name!r}, size {cfg.size}) failed "
                f"{cfg.max_attempts} attempts; failure counts so far: {failures}")
        levels.append(level)
    return levels


def edge_case_config(seed: int = 0, size: int = 9, **kwargs) -> GenConfig:
    """GenConfig over the held-out pattern set."""
    return GenConfig(size=size, patterns=EDGE_PATTERN_NAMES, seed=seed, **kwargs)
