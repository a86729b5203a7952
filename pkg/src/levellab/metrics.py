"""Generalisation diagnostics.

Pure functions: the generalisation gap and its information-theoretic
bound, the distribution-shift gap, tile-by-distance histograms with
their Jensen-Shannon divergence, and summary statistics over sampled
levels.
"""

from __future__ import annotations

import numpy as np

from .env import (
    LevelParams,
    NUM_TILE_TYPES,
    bfs_distances,
    full_distance_map,
)

DISTANCE_BINS = 16  # unit-width bins 0..15, then one overflow bin


def gen_gap(train_returns, test_returns) -> float:
    """Mean train return minus mean test return."""
    train = np.asarray(train_returns, dtype=np.float64)
    test = np.asarray(test_returns, dtype=np.float64)
    if train.size == 0 or test.size == 0:
        raise ValueError("gen_gap needs nonempty return sets")
    return float(train.mean() - test.mean())


def gen_gap_bound(mi_estimate: float, num_levels: int, d: float = 2.0) -> float:
    """Upper bound sqrt(2 D^2 MI / |L|) on the generalisation gap; diagnostic only."""
    if mi_estimate < 0:
        raise ValueError("mi_estimate must be nonnegative")
    if num_levels < 1:
        raise ValueError("num_levels must be at least 1")
    if d <= 0:
        raise ValueError("d must be positive")
    return float(np.sqrt(2.0 * d * d / num_levels * mi_estimate))


def shift_gap(p, buffer_returns, train_returns) -> float:
    """Expected return under the sampling distribution minus the uniform
    train-set mean."""
    p = np.asarray(p, dtype=np.float64)
    v = np.asarray(buffer_returns, dtype=np.float64)
    train = np.asarray(train_returns, dtype=np.float64)
    if p.shape != v.shape:
        raise ValueError("distribution and returns must align")
    if abs(p.sum() - 1.0) > 1e-9 or (p < 0).any():
        raise ValueError("p is not a probability vector")
    return float((p * v).sum() - train.mean())


def tile_distance_histogram(level: LevelParams, bins: int = DISTANCE_BINS) -> np.ndarray:
    """Joint distribution over (tile type, goal-distance bin).

    Distances use shortest navigable paths; non-navigable cells inherit
    their nearest navigable cell's distance plus the offset. Bin b covers
    distance b for b < bins; everything farther (or unreachable) lands in
    the final overflow bin. Normalized to sum 1.
    """
    dist = full_distance_map(level.grid, level.goal)
    binned = np.where(np.isfinite(dist), np.minimum(dist, bins), bins).astype(np.int64)
    hist = np.zeros((NUM_TILE_TYPES, bins + 1), dtype=np.float64)
    for t in range(NUM_TILE_TYPES):
        sel = binned[level.grid == t]
        if sel.size:
            hist[t] += np.bincount(sel, minlength=bins + 1)
    return hist / hist.sum()


def jsd(p, q) -> float:
    """Jensen-Shannon divergence, natural log, 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    if p.shape != q.shape:
        raise ValueError("jsd needs matching supports")
    for name, x in (("p", p), ("q", q)):
        if (x < 0).any() or abs(x.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} is not a probability vector")
    m = 0.5 * (p + q)

    def kl(a, b):
        mask = a > 0
        return float((a[mask] * np.log(a[mask] / b[mask])).sum())

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def buffer_statistics(levels, weights=None) -> dict:
    """Moss/lava density and mean start-goal path length over a window.

    ``weights`` are sampling frequencies; omitted means uniform. Levels
    without a navigable path contribute their grid densities but are
    excluded from the path-length mean.
    """
    levels = list(levels)
    if not levels:
        raise ValueError("buffer_statistics needs a nonempty window")
    if weights is None:
        w = np.full(len(levels), 1.0 / len(levels))
    else:
        w = np.asarray(weights, dtype=np.float64)
        w = w / w.sum()

    moss = np.array([float((lv.grid == 2).mean()) for lv in levels])
    lava = np.array([float((lv.grid == 3).mean()) for lv in levels])
    paths = np.array([
        float(bfs_distances(lv.grid, lv.start)[lv.goal]) for lv in levels
    ])
    finite = np.isfinite(paths)
    if finite.any():
        wf = w[finite] / w[finite].sum()
        path_len = float((paths[finite] * wf).sum())
    else:
        path_len = float("nan")
    return {
        "moss_density": float((moss * w).sum()),
        "lava_density": float((lava * w).sum()),
        "path_len": path_len,
    }
