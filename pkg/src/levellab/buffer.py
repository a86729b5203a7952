"""Prioritized level store and its sampling distributions.

The buffer holds the fixed training set plus any admitted generated
levels. Replay probabilities blend a rank-prioritized score distribution
with a staleness distribution; an optional secondary score distribution
(supported on the whole buffer, generated levels included) is mixed in
with a schedule weight eta. Score and staleness mass never touches
generated entries directly: they are reachable only through the
secondary term.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import LevelParams, level_from_record, level_to_record

ORIGIN_TRAIN = "TRAIN_SET"
ORIGIN_GENERATED = "GENERATED"

_SUM_TOL = 1e-9


@dataclass
class BufferEntry:
    level: LevelParams
    origin: str = ORIGIN_TRAIN
    score: float | None = None
    secondary_score: float | None = None
    stamp: int = 0
    solved_once: bool = False

    def __post_init__(self):
        if self.origin not in (ORIGIN_TRAIN, ORIGIN_GENERATED):
            raise ValueError(f"unknown origin {self.origin!r}")
        for s in (self.score, self.secondary_score):
            if s is not None and not np.isfinite(s):
                raise ValueError("scores must be finite")


@dataclass(frozen=True)
class SamplingConfig:
    """Replay distribution knobs.

    ``capacity_mode`` picks how generated levels are bounded: ``split``
    keeps a dedicated ``generated_capacity`` next to the training set,
    ``total`` caps the whole buffer at ``total_capacity`` and admission
    evicts generated entries only.
    """

    rho: float = 0.3
    temperature: float = 0.1
    secondary_temperature: float = 1.0
    prioritization: str = "rank"
    replay_rate: float = 1.0
    generated_capacity: int = 512
    capacity_mode: str = "split"
    total_capacity: int = 1024

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.temperature <= 0 or self.secondary_temperature <= 0:
            raise ValueError("temperatures must be positive")
        if self.prioritization != "rank":
            raise ValueError(f"unsupported prioritization {self.prioritization!r}")
        if self.capacity_mode not in ("split", "total"):
            raise ValueError(f"capacity_mode must be 'split' or 'total'")
        if not 0.0 <= self.replay_rate <= 1.0:
            raise ValueError("replay_rate must lie in [0, 1]")


def score_value_loss(advantages) -> float:
    """Mean absolute advantage over the trajectory."""
    a = np.asarray(advantages, dtype=np.float64)
    if a.size == 0:
        raise ValueError("cannot score an empty trajectory")
    return float(np.abs(a).mean())


def score_positive_value_loss(advantages) -> float:
    """Mean positive part of the advantages (RPLR-style scoring)."""
    a = np.asarray(advantages, dtype=np.float64)
    if a.size == 0:
        raise ValueError("cannot score an empty trajectory")
    return float(np.maximum(a, 0.0).mean())


def rank_prioritization(scores, temperature: float) -> np.ndarray:
    """P(i) proportional to rank(i)^(-1/temperature), rank 1 = best score.

    Ties keep insertion order (stable sort), so equal scores rank in the
    order they entered.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("rank_prioritization needs at least one score")
    order = np.argsort(-s, kind="stable")
    ranks = np.empty(s.size, dtype=np.float64)
    ranks[order] = np.arange(1, s.size + 1)
    weights = ranks ** (-1.0 / temperature)
    return weights / weights.sum()


def staleness_distribution(stamps, global_counter: int) -> np.ndarray:
    """P(i) proportional to age; uniform when nothing has aged."""
    stamps = np.asarray(stamps, dtype=np.float64)
    if (stamps > global_counter).any():
        raise ValueError("stamp exceeds the global counter")
    ages = global_counter - stamps
    total = ages.sum()
    if total == 0:
        return np.full(stamps.size, 1.0 / stamps.size)
    return ages / total


def _check_distribution(p, name: str, n: int):
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (n,):
        raise ValueError(f"{name} must have length {n}, got shape {p.shape}")
    if (p < 0).any():
        raise ValueError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > _SUM_TOL:
        raise ValueError(f"{name} sums to {p.sum()}, expected 1")
    return p


def p_lambda(p_s, p_r, rho: float) -> np.ndarray:
    """Replay distribution: (1-rho) * P_S + rho * P_R."""
    n = len(np.asarray(p_s))
    p_s = _check_distribution(p_s, "P_S", n)
    p_r = _check_distribution(p_r, "P_R", n)
    return (1.0 - rho) * p_s + rho * p_r


def p_lambda_mixed(p_s, p_s_secondary, p_r, rho: float, eta: float,
                   generated_mask=None) -> np.ndarray:
    """Mixed replay distribution:
    (1-rho) * ((1-eta) * P_S + eta * P_S') + rho * P_R.

    ``generated_mask`` marks generated entries; P_S and P_R must carry no
    mass there (they are train-set distributions embedded in the full
    support), while P_S' may cover everything.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    n = len(np.asarray(p_s_secondary))
    p_s = _check_distribution(p_s, "P_S", n)
    p_sec = _check_distribution(p_s_secondary, "P_S'", n)
    p_r = _check_distribution(p_r, "P_R", n)
    if generated_mask is not None:
        mask = np.asarray(generated_mask, dtype=bool)
        if mask.shape != (n,):
            raise ValueError("generated_mask length mismatch")
        if p_s[mask].sum() > _SUM_TOL or p_r[mask].sum() > _SUM_TOL:
            raise ValueError("train-set distribution has mass on GENERATED entries")
    return (1.0 - rho) * ((1.0 - eta) * p_s + eta * p_sec) + rho * p_r


def eta_schedule(update_index: int, total_updates: int) -> float:
    """Linear 0 -> 1 over the training budget."""
    if total_updates <= 0:
        raise ValueError("total_updates must be positive")
    if not 0 <= update_index <= total_updates:
        raise ValueError(f"update index {update_index} outside [0, {total_updates}]")
    return update_index / total_updates


class LevelBuffer:
    """Training-set levels plus admitted generated levels, with scores.

    Mutation goes through the methods below; sampling reads a consistent
    snapshot of scores and stamps. The global counter counts sampling
    events (each drawn level advances it by one).
    """

    def __init__(self, train_levels, config: SamplingConfig | None = None):
        train_levels = list(train_levels)
        if not train_levels:
            raise ValueError("buffer needs at least one training level")
        self.config = config or SamplingConfig()
        self.entries: list[BufferEntry] = [
            BufferEntry(level=lv, origin=ORIGIN_TRAIN) for lv in train_levels
        ]
        self.counter = 0

    def __len__(self):
        return len(self.entries)

    @property
    def train_indices(self) -> list[int]:
        return [i for i, e in enumerate(self.entries) if e.origin == ORIGIN_TRAIN]

    @property
    def generated_indices(self) -> list[int]:
        return [i for i, e in enumerate(self.entries) if e.origin == ORIGIN_GENERATED]

    def generated_mask(self) -> np.ndarray:
        return np.array([e.origin == ORIGIN_GENERATED for e in self.entries])

    # --- distributions ----------------------------------------------------

    def _train_distribution(self, values) -> np.ndarray:
        """Embed a train-set rank distribution into the full support."""
        out = np.zeros(len(self.entries))
        idx = self.train_indices
        out[idx] = rank_prioritization(values, self.config.temperature)
        return out

    def sampling_distribution(self, eta: float = 0.0) -> np.ndarray:
        """P over all entries. Unscored train levels get first-visit
        priority: while any exist, mass is uniform over exactly those."""
        train_idx = self.train_indices
        unscored = [i for i in train_idx if self.entries[i].score is None]
        if unscored:
            out = np.zeros(len(self.entries))
            out[unscored] = 1.0 / len(unscored)
            return out

        scores = [self.entries[i].score for i in train_idx]
        p_s = self._train_distribution(scores)
        p_r = np.zeros(len(self.entries))
        stamps = [self.entries[i].stamp for i in train_idx]
        p_r[train_idx] = staleness_distribution(stamps, self.counter)

        if eta == 0.0:
            return p_lambda(p_s, p_r, self.config.rho)

        sec = np.array([
            e.secondary_score if e.secondary_score is not None else -np.inf
            for e in self.entries
        ])
        order = np.argsort(-sec, kind="stable")
        ranks = np.empty(sec.size)
        ranks[order] = np.arange(1, sec.size + 1)
        weights = ranks ** (-1.0 / self.config.secondary_temperature)
        p_sec = weights / weights.sum()
        return p_lambda_mixed(p_s, p_sec, p_r, self.config.rho, eta,
                              self.generated_mask())

    def sampling_distribution_full(self) -> np.ndarray:
        """Single-population replay distribution over every entry.

        Used by methods whose buffer is one undifferentiated pool (score
        and staleness span all entries). First-visit priority applies to
        any unscored entry regardless of origin."""
        unscored = [i for i, e in enumerate(self.entries) if e.score is None]
        if unscored:
            out = np.zeros(len(self.entries))
            out[unscored] = 1.0 / len(unscored)
            return out
        p_s = rank_prioritization([e.score for e in self.entries],
                                  self.config.temperature)
        p_r = staleness_distribution([e.stamp for e in self.entries],
                                     self.counter)
        return p_lambda(p_s, p_r, self.config.rho)

    def sample(self, rng: np.random.Generator, n: int, eta: float = 0.0) -> list[int]:
        """Draw n level indices from P, stamping each drawn level."""
        p = self.sampling_distribution(eta)
        idx = rng.choice(len(self.entries), size=n, replace=True, p=p)
        for i in idx:
            self.counter += 1
            self.entries[int(i)].stamp = self.counter
        return [int(i) for i in idx]

    # --- mutation -----------------------------------------------------------

    def update_score(self, index: int, score: float,
                     secondary_score: float | None = None):
        """Overwrite with the newest score (revisit semantics)."""
        if not np.isfinite(score):
            raise ValueError("score must be finite")
        e = self.entries[index]
        e.score = float(score)
        if secondary_score is not None:
            if not np.isfinite(secondary_score):
                raise ValueError("secondary score must be finite")
            e.secondary_score = float(secondary_score)

    def update_secondary_score(self, index: int, score: float):
        """Refresh S' alone; the primary score keeps its last value."""
        if not np.isfinite(score):
            raise ValueError("secondary score must be finite")
        self.entries[index].secondary_score = float(score)

    def mark_solved(self, index: int):
        self.entries[index].solved_once = True

    def admit_generated(self, entry: BufferEntry,
                        require_solved: bool = True) -> bool:
        """Admission rule for generated levels.

        Unsolved levels are rejected unless ``require_solved`` is False
        (methods without a solvability filter). Otherwise the level
        enters a free generated slot, or displaces the lowest-scoring
        generated entry when it beats that score.
        """
        if entry.origin != ORIGIN_GENERATED:
            raise ValueError("admit_generated only accepts GENERATED entries")
        if entry.score is None or not np.isfinite(entry.score):
            raise ValueError("generated entries must arrive scored")
        if require_solved and not entry.solved_once:
            return False

        gen_idx = self.generated_indices
        if self.config.capacity_mode == "split":
            free = len(gen_idx) < self.config.generated_capacity
        else:
            free = len(self.entries) < self.config.total_capacity
        if free:
            entry.stamp = self.counter
            self.entries.append(entry)
            return True
        if not gen_idx:
            return False
        worst = min(gen_idx, key=lambda i: self.entries[i].score)
        if entry.score > self.entries[worst].score:
            entry.stamp = self.counter
            self.entries[worst] = entry
            return True
        return False

    # --- persistence ----------------------------------------------------------

    def dump(self, path) -> None:
        payload = {
            "counter": self.counter,
            "entries": [
                {
                    "level": level_to_record(e.level),
                    "origin": e.origin,
                    "score": e.score,
                    "secondary_score": e.secondary_score,
                    "stamp": e.stamp,
                    "solved_once": e.solved_once,
                }
                for e in self.entries
            ],
        }
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def load(cls, path, config: SamplingConfig | None = None) -> "LevelBuffer":
        payload = json.loads(Path(path).read_text())
        buf = cls.__new__(cls)
        buf.config = config or SamplingConfig()
        buf.counter = int(payload["counter"])
        buf.entries = [
            BufferEntry(
                level=level_from_record(rec["level"]),
                origin=rec["origin"],
                score=rec["score"],
                secondary_score=rec["secondary_score"],
                stamp=int(rec["stamp"]),
                solved_once=bool(rec["solved_once"]),
            )
            for rec in payload["entries"]
        ]
        return buf
