"""A_w tables and robustness plots rendered from grid CSVs."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import matplotlib
import pandas as pd
from matplotlib.figure import Figure

from src.robustness_eval import GridError, RobustnessGrid, worst_case, worst_case_by_run

from .grid_csv import format_epsilon, read_grid_csv, read_grid_meta

logger = logging.getLogger(__name__)

AW_TABLE_NAME = "aw_table.csv"
AW_TEXT_NAME = "aw_table.txt"
AW_BY_RUN_NAME = "aw_by_run.csv"
PROVENANCE_NAME = "provenance.json"
# Fixed salt and no timestamp keep SVG output byte-identical across runs.
SVG_RC = {"svg.hashsalt": "gray-box-lab", "svg.fonttype": "none", "path.simplify": False}


@dataclass
class ReportBundle:
    grid_csvs: list[Path]
    aw_table: Path
    aw_text: Path
    aw_by_run: Path
    svgs: list[Path] = field(default_factory=list)
    provenance_path: Path | None = None
    provenance: dict[str, Any] = field(default_factory=dict)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def check_epsilons(grids: Sequence[tuple[Path, RobustnessGrid]]) -> tuple[float, ...]:
    """Every input must share one epsilon grid; mismatches name both grids."""
    reference_path, reference = grids[0]
    for path, grid in grids[1:]:
        if grid.epsilons != reference.epsilons:
            raise GridError(
                f"inconsistent epsilon grids: {reference_path} has {list(reference.epsilons)}, "
                f"{path} has {list(grid.epsilons)}"
            )
    return reference.epsilons


def group_by_target(grids: Sequence[RobustnessGrid]) -> dict[tuple[str, int, str], list[RobustnessGrid]]:
    groups: dict[tuple[str, int, str], list[RobustnessGrid]] = {}
    for grid in grids:
        groups.setdefault((*grid.target.key, grid.attack.value), []).append(grid)
    return dict(sorted(groups.items()))


def _row_labels(groups: dict[tuple[str, int, str], list[RobustnessGrid]]) -> dict[tuple[str, int, str], str]:
    """Rows are named by training method; repeated methods get their run id."""
    methods = {key: grids[0].target.method.value for key, grids in groups.items()}
    several_attacks = len({key[2] for key in groups}) > 1
    labels = {}
    for key, method in methods.items():
        duplicated = list(methods.values()).count(method) > 1
        label = f"{method} [{key[0]}@{key[1]}]" if duplicated else method
        labels[key] = f"{label} ({key[2]})" if several_attacks else label
    return labels


def aw_table(groups: dict[tuple[str, int, str], list[RobustnessGrid]], epsilons: Sequence[float]) -> pd.DataFrame:
    labels = _row_labels(groups)
    frame = pd.DataFrame(
        [[worst_case(grids, eps) for eps in epsilons] for grids in groups.values()],
        index=pd.Index([labels[key] for key in groups], name="training_method"),
        columns=[format_epsilon(eps) for eps in epsilons],
    )
    frame.columns.name = "epsilon"
    return frame


def aw_by_run_table(groups: dict[tuple[str, int, str], list[RobustnessGrid]], epsilons: Sequence[float]) -> pd.DataFrame:
    labels = _row_labels(groups)
    rows = []
    for key, grids in groups.items():
        per_eps = {format_epsilon(eps): worst_case_by_run(grids, eps) for eps in epsilons}
        for run_id in next(iter(per_eps.values())):
            rows.append({"training_method": labels[key], "source_run": run_id, **{e: v[run_id] for e, v in per_eps.items()}})
    return pd.DataFrame(rows, columns=["training_method", "source_run", *(format_epsilon(eps) for eps in epsilons)])


def plot_group(grids: Sequence[RobustnessGrid], path: Path) -> Path:
    """One panel per source run: accuracy against source iteration, one line per epsilon."""
    runs: dict[str, list[tuple[int, list[float]]]] = {}
    for grid in grids:
        for ref, values in zip(grid.sources, grid.accuracy):
            runs.setdefault(ref.run_id, []).append((ref.iteration, list(values)))
    epsilons = grids[0].epsilons
    target = grids[0].target

    with matplotlib.rc_context(SVG_RC):
        figure = Figure(figsize=(5.0 * len(runs), 4.0))
        axes = figure.subplots(1, len(runs), squeeze=False)[0]
        for ax, (run_id, points) in zip(axes, sorted(runs.items())):
            points.sort(key=lambda point: point[0])
            iterations = [iteration for iteration, _ in points]
            for column, eps in enumerate(epsilons):
                ax.plot(iterations, [values[column] for _, values in points], marker=".", label=f"eps={format_epsilon(eps)}")
            ax.set_ylim(0, 100)
            ax.set_xlabel("source iteration")
            ax.set_ylabel("accuracy (%)")
            ax.set_title(f"sources: {run_id}", fontsize="small")
            ax.grid(True, alpha=0.3)
        axes[-1].legend(fontsize="x-small", loc="lower right")
        figure.suptitle(f"{target.run_id} @ {target.iteration} ({grids[0].attack.value})")
        figure.savefig(path, format="svg", metadata={"Date": None})
    return path


def build_report(csv_paths: Sequence[str | os.PathLike[str]], out_dir: str | os.PathLike[str]) -> ReportBundle:
    if not csv_paths:
        raise GridError("no grid CSVs given")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [Path(path) for path in csv_paths]
    loaded = [(path, read_grid_csv(path)) for path in paths]
    epsilons = check_epsilons(loaded)
    groups = group_by_target([grid for _, grid in loaded])

    table = aw_table(groups, epsilons)
    aw_path = out_dir / AW_TABLE_NAME
    table.to_csv(aw_path, float_format="%.2f", lineterminator="\n")
    text_path = out_dir / AW_TEXT_NAME
    text_path.write_text(table.to_string(float_format=lambda value: f"{value:.2f}") + "\n")
    by_run_path = out_dir / AW_BY_RUN_NAME
    aw_by_run_table(groups, epsilons).to_csv(by_run_path, index=False, float_format="%.2f", lineterminator="\n")

    svgs = []
    for (run_id, iteration, attack), grids in groups.items():
        svg = plot_group(grids, out_dir / f"plot_{run_id}_iter{iteration}_{attack}.svg")
        svgs.append(svg)
        logger.info("Wrote %s", svg)

    grids_provenance = []
    for path in paths:
        meta = read_grid_meta(path)
        grids_provenance.append(
            {"csv": path.name, "sha256": _sha256(path), "target": meta["target"], "attack": meta["attack"], **meta["provenance"]}
        )
    provenance = {"grids": grids_provenance, "epsilons": list(epsilons)}
    provenance_path = out_dir / PROVENANCE_NAME
    provenance_path.write_text(json.dumps(provenance, indent=2, sort_keys=True) + "\n")
    logger.info("A_w table:\n%s", table.to_string(float_format=lambda value: f"{value:.2f}"))
    return ReportBundle(paths, aw_path, text_path, by_run_path, svgs, provenance_path, provenance)
