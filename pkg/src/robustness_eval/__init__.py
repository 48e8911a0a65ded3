"""Robustness plots, worst-case accuracy and the attack taxonomy."""

from .grid import (
    DEFAULT_EPSILONS,
    EVAL_ATTACK_SEED,
    GridError,
    LoadedModel,
    RobustnessGrid,
    build_grid,
    build_grid_async,
    early_valley,
    evaluate_cell,
    load_target,
    white_box_accuracy,
    worst_case,
    worst_case_by_run,
)
from .taxonomy import AttackTaxonomy, CheckpointRef, classify, sources_from_manifest

__all__ = [
    "DEFAULT_EPSILONS",
    "EVAL_ATTACK_SEED",
    "AttackTaxonomy",
    "CheckpointRef",
    "GridError",
    "LoadedModel",
    "RobustnessGrid",
    "build_grid",
    "build_grid_async",
    "classify",
    "early_valley",
    "evaluate_cell",
    "load_target",
    "sources_from_manifest",
    "white_box_accuracy",
    "worst_case",
    "worst_case_by_run",
]
