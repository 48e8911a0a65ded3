"""Robustness grids as CSV, with a JSON provenance sidecar."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from src.attacks import AttackMethod
from src.checkpoint_bank import MethodTag
from src.robustness_eval import AttackTaxonomy, CheckpointRef, GridError, RobustnessGrid

COLUMNS = ["source_run", "source_iter", "epsilon", "attack", "taxonomy", "accuracy_pct"]
META_SUFFIX = ".meta.json"


def meta_path(csv_path: str | os.PathLike[str]) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.name + META_SUFFIX)


def format_epsilon(epsilon: float) -> str:
    return format(epsilon, "g")


def _ref_json(ref: CheckpointRef) -> dict[str, Any]:
    return {
        "run_id": ref.run_id,
        "network": ref.network,
        "method": ref.method.value,
        "iteration": ref.iteration,
        "is_best": ref.is_best,
    }


def _ref_from_json(payload: dict[str, Any]) -> CheckpointRef:
    return CheckpointRef(
        run_id=payload["run_id"],
        network=payload["network"],
        method=MethodTag(payload["method"]),
        iteration=int(payload["iteration"]),
        is_best=bool(payload.get("is_best", False)),
    )


def grid_frame(grid: RobustnessGrid) -> pd.DataFrame:
    rows = [
        {
            "source_run": ref.run_id,
            "source_iter": ref.iteration,
            "epsilon": format_epsilon(eps),
            "attack": grid.attack.value,
            "taxonomy": label.value,
            "accuracy_pct": f"{grid.accuracy[row, column]:.2f}",
            "_eps": eps,
        }
        for row, (ref, label) in enumerate(zip(grid.sources, grid.taxonomy))
        for column, eps in enumerate(grid.epsilons)
    ]
    frame = pd.DataFrame(rows, columns=[*COLUMNS, "_eps"])
    frame = frame.sort_values(["source_run", "source_iter", "_eps"], kind="mergesort")
    return frame[COLUMNS].reset_index(drop=True)


def write_grid_csv(grid: RobustnessGrid, path: str | os.PathLike[str], provenance: dict[str, Any] | None = None) -> Path:
    """One row per cell sorted by (source_run, source_iter, epsilon); 2-decimal accuracies."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid_frame(grid).to_csv(path, index=False, lineterminator="\n")
    meta = {
        "target": _ref_json(grid.target),
        "attack": grid.attack.value,
        "epsilons": list(grid.epsilons),
        "sources": [_ref_json(ref) for ref in grid.sources],
        "provenance": provenance or {},
    }
    meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_grid_meta(path: str | os.PathLike[str]) -> dict[str, Any]:
    sidecar = meta_path(path)
    if not sidecar.exists():
        raise GridError(f"{path}: missing provenance sidecar {sidecar.name}")
    return json.loads(sidecar.read_text())


def read_grid_csv(path: str | os.PathLike[str]) -> RobustnessGrid:
    """Rebuild the grid from its CSV and sidecar."""
    frame = pd.read_csv(path, dtype={"source_run": str, "attack": str, "taxonomy": str})
    if list(frame.columns) != COLUMNS:
        raise GridError(f"{path}: expected columns {COLUMNS}, found {list(frame.columns)}")
    meta = read_grid_meta(path)
    attacks = set(frame["attack"])
    if len(attacks) != 1:
        raise GridError(f"{path}: expected one attack method, found {sorted(attacks)}")

    epsilons = tuple(float(eps) for eps in meta["epsilons"])
    sources = tuple(_ref_from_json(entry) for entry in meta["sources"])
    row_of = {ref.key: row for row, ref in enumerate(sources)}
    accuracy = np.full((len(sources), len(epsilons)), np.nan)
    taxonomy: list[AttackTaxonomy | None] = [None] * len(sources)
    for record in frame.itertuples(index=False):
        key = (record.source_run, int(record.source_iter))
        if key not in row_of:
            raise GridError(f"{path}: row for unknown source {key[0]}@{key[1]}")
        row = row_of[key]
        column = next(
            (index for index, eps in enumerate(epsilons) if np.isclose(eps, record.epsilon, atol=1e-9)), None
        )
        if column is None:
            raise GridError(f"{path}: epsilon {record.epsilon} is not in {list(epsilons)}")
        accuracy[row, column] = float(record.accuracy_pct)
        taxonomy[row] = AttackTaxonomy(record.taxonomy)
    if any(label is None for label in taxonomy):
        raise GridError(f"{path}: some sources have no rows")
    return RobustnessGrid(
        target=_ref_from_json(meta["target"]),
        sources=sources,
        epsilons=epsilons,
        accuracy=accuracy,
        attack=AttackMethod(attacks.pop()),
        taxonomy=tuple(taxonomy),
    )
