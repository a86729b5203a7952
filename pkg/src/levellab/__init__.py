"""Desk-scale laboratory for adaptive level sampling and generative
environment design on a procedural gridworld."""

from .env import (
    GridEnv,
    InvalidLevelError,
    LevelParams,
    Observation,
    EnvState,
    TerminalStepError,
    Tile,
    bfs_distances,
    full_distance_map,
    load_levels,
    make_level,
    save_levels,
    solvable,
)
from .wfc import GenConfig, GenerationError, generate_dataset, wfc_collapse

__all__ = [
    "GridEnv",
    "InvalidLevelError",
    "LevelParams",
    "Observation",
    "EnvState",
    "TerminalStepError",
    "Tile",
    "bfs_distances",
    "full_distance_map",
    "load_levels",
    "make_level",
    "save_levels",
    "solvable",
    "GenConfig",
    "GenerationError",
    "generate_dataset",
    "wfc_collapse",
]

__version__ = "0.1.0"
