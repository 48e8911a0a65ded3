"""Robustness grids: a target classifying adversaries from many source
snapshots at many perturbation strengths, and the worst-case accuracy A_w
derived from them."""

from __future__ import annotations

import asyncio
import logging
import math
import os
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt

from src.attacks import AttackMethod, AttackSpec, apply_perturbation, attack_direction
from src.checkpoint_bank import MANIFEST_NAME, load_checkpoint, load_manifest
from src.mnist_data import Dataset
from src.nn_engine import DEFAULT_EVAL_BATCH, NetworkSpec, Parameters, forward, get_spec

from .taxonomy import AttackTaxonomy, CheckpointRef, classify

logger = logging.getLogger(__name__)

DEFAULT_EPSILONS: tuple[float, ...] = tuple(round(0.05 * step, 2) for step in range(11))
# Fixed so FGSM-Rand grids are reproducible.
EVAL_ATTACK_SEED = 1234
EARLY_FRACTION = 0.2


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class LoadedModel:
    ref: CheckpointRef
    spec: NetworkSpec
    params: Parameters

    @classmethod
    def from_ref(cls, ref: CheckpointRef, spec: NetworkSpec | None = None) -> LoadedModel:
        if ref.path is None:
            raise GridError(f"{ref.run_id}@{ref.iteration} has no checkpoint file")
        ckpt = load_checkpoint(ref.path, spec=spec)
        if (ckpt.run_id, ckpt.iteration, ckpt.network) != (ref.run_id, ref.iteration, ref.network):
            raise GridError(
                f"{ref.path} holds {ckpt.run_id}@{ckpt.iteration} ({ckpt.network}), "
                f"expected {ref.run_id}@{ref.iteration} ({ref.network})"
            )
        return cls(ref, spec or get_spec(ckpt.network), ckpt.params)


def load_target(path: str | os.PathLike[str], *, spec: NetworkSpec | None = None) -> LoadedModel:
    """Load a target checkpoint; it counts as best when its run manifest says so."""
    path = Path(path)
    ckpt = load_checkpoint(path, spec=spec)
    manifest_path = path.parent.parent / MANIFEST_NAME
    is_best = path.name == "best.ckpt"
    if manifest_path.exists():
        is_best = is_best or load_manifest(manifest_path).best_iteration == ckpt.iteration
    ref = CheckpointRef(ckpt.run_id, ckpt.network, ckpt.method, ckpt.iteration, path, is_best)
    return LoadedModel(ref, spec or get_spec(ckpt.network), ckpt.params)


@dataclass(frozen=True)
class RobustnessGrid:
    target: CheckpointRef
    sources: tuple[CheckpointRef, ...]
    epsilons: tuple[float, ...]
    accuracy: npt.NDArray[np.float64]
    attack: AttackMethod
    taxonomy: tuple[AttackTaxonomy, ...]

    def __post_init__(self) -> None:
        shape = (len(self.sources), len(self.epsilons))
        if self.accuracy.shape != shape or len(self.taxonomy) != len(self.sources):
            raise GridError(f"grid of shape {self.accuracy.shape} does not cover {shape} cells")
        if np.isnan(self.accuracy).any():
            raise GridError("grid has unevaluated cells")

    def epsilon_index(self, epsilon: float) -> int:
        for index, value in enumerate(self.epsilons):
            if math.isclose(value, epsilon, abs_tol=1e-9):
                return index
        raise GridError(f"epsilon {epsilon} is not in the grid {list(self.epsilons)}")

    def column(self, epsilon: float) -> npt.NDArray[np.float64]:
        return self.accuracy[:, self.epsilon_index(epsilon)]


def _check_compatible(target: LoadedModel, source: LoadedModel) -> None:
    if target.spec.input_shape != source.spec.input_shape or target.spec.classes != source.spec.classes:
        raise GridError(f"source {source.spec.name} and target {target.spec.name} disagree on input or class count")


def _source_row(
    target: LoadedModel,
    source: LoadedModel,
    epsilons: Sequence[float],
    method: AttackMethod,
    testset: Dataset,
    seed: int,
    chunk: int,
) -> npt.NDArray[np.float64]:
    """Accuracy per epsilon; one source gradient per chunk serves every epsilon."""
    _check_compatible(target, source)
    correct = np.zeros(len(epsilons), dtype=np.int64)
    attack = AttackSpec(method, 0.0, seed)
    needs_gradient = any(eps > 0 for eps in epsilons)
    for number, start in enumerate(range(0, len(testset), chunk)):
        images = testset.images[start : start + chunk]
        labels = testset.labels[start : start + chunk]
        direction = None
        if needs_gradient:
            direction = attack_direction(source.spec, source.params, images, labels, attack.derive(number))
        for column, eps in enumerate(epsilons):
            batch = images if eps == 0 else apply_perturbation(images, direction, eps)
            logits, _ = forward(target.spec, target.params, batch, "eval")
            correct[column] += int((logits.argmax(axis=1) == labels).sum())
    return 100.0 * correct / max(len(testset), 1)


def evaluate_cell(
    target: LoadedModel,
    source: LoadedModel,
    epsilon: float,
    method: AttackMethod,
    testset: Dataset,
    *,
    seed: int = EVAL_ATTACK_SEED,
    chunk: int = DEFAULT_EVAL_BATCH,
) -> float:
    """Accuracy (percent) of ``target`` on adversaries generated from ``source``."""
    if not math.isfinite(epsilon) or epsilon < 0:
        raise GridError(f"epsilon must be a finite value >= 0, got {epsilon}")
    return float(_source_row(target, source, [epsilon], method, testset, seed, chunk)[0])


async def build_grid_async(
    target: LoadedModel,
    sources: Sequence[CheckpointRef],
    epsilons: Sequence[float],
    method: AttackMethod,
    testset: Dataset,
    *,
    workers: int = 1,
    seed: int = EVAL_ATTACK_SEED,
    chunk: int = DEFAULT_EVAL_BATCH,
    specs: Mapping[str, NetworkSpec] | None = None,
) -> RobustnessGrid:
    if not sources:
        raise GridError("no source snapshots to evaluate")
    if not epsilons:
        raise GridError("no epsilons to evaluate")
    if any(not math.isfinite(eps) or eps < 0 for eps in epsilons):
        raise GridError(f"epsilons must be finite values >= 0, got {list(epsilons)}")
    ordered = sorted({ref.key: ref for ref in sources}.values(), key=lambda ref: ref.key)
    semaphore = asyncio.Semaphore(max(1, workers))

    def evaluate_source(ref: CheckpointRef) -> npt.NDArray[np.float64]:
        if ref.key == target.ref.key:
            source = target
        else:
            source = LoadedModel.from_ref(ref, (specs or {}).get(ref.network))
        return _source_row(target, source, epsilons, method, testset, seed, chunk)

    async def row(ref: CheckpointRef) -> npt.NDArray[np.float64]:
        async with semaphore:
            values = await asyncio.to_thread(evaluate_source, ref)
        logger.info("Source %s@%d done: %s", ref.run_id, ref.iteration, ", ".join(f"{v:.2f}" for v in values))
        return values

    rows = await asyncio.gather(*(row(ref) for ref in ordered))
    return RobustnessGrid(
        target=target.ref,
        sources=tuple(ordered),
        epsilons=tuple(float(eps) for eps in epsilons),
        accuracy=np.vstack(rows),
        attack=method,
        taxonomy=tuple(classify(ref, target.ref) for ref in ordered),
    )


def build_grid(
    target: LoadedModel,
    sources: Sequence[CheckpointRef],
    epsilons: Sequence[float],
    method: AttackMethod,
    testset: Dataset,
    *,
    workers: int = 1,
    seed: int = EVAL_ATTACK_SEED,
    chunk: int = DEFAULT_EVAL_BATCH,
    specs: Mapping[str, NetworkSpec] | None = None,
) -> RobustnessGrid:
    """Evaluate every (source, epsilon) cell; rows are ordered by (run id, iteration)."""
    return asyncio.run(
        build_grid_async(
            target, sources, epsilons, method, testset, workers=workers, seed=seed, chunk=chunk, specs=specs
        )
    )


def _as_list(grids: RobustnessGrid | Iterable[RobustnessGrid]) -> list[RobustnessGrid]:
    return [grids] if isinstance(grids, RobustnessGrid) else list(grids)


def worst_case(grids: RobustnessGrid | Iterable[RobustnessGrid], epsilon: float) -> float:
    """A_w: the minimum accuracy over every source of every grid at ``epsilon``."""
    columns = [grid.column(epsilon) for grid in _as_list(grids)]
    if not columns:
        raise GridError("no grids given")
    return float(min(column.min() for column in columns))


def worst_case_by_run(grids: RobustnessGrid | Iterable[RobustnessGrid], epsilon: float) -> dict[str, float]:
    """Per source run minimum at ``epsilon``, sorted by run id."""
    minima: dict[str, float] = {}
    for grid in _as_list(grids):
        for ref, value in zip(grid.sources, grid.column(epsilon)):
            minima[ref.run_id] = min(minima.get(ref.run_id, math.inf), float(value))
    return dict(sorted(minima.items()))


def early_valley(grid: RobustnessGrid, epsilon: float, *, run_id: str | None = None, fraction: float = EARLY_FRACTION) -> float:
    """Minimum accuracy over the earliest ``fraction`` of one run's snapshots."""
    run_id = run_id or grid.target.run_id
    rows = [index for index, ref in enumerate(grid.sources) if ref.run_id == run_id]
    if not rows:
        raise GridError(f"grid has no sources from run {run_id}")
    count = max(1, math.ceil(fraction * len(rows)))
    return float(grid.column(epsilon)[rows[:count]].min())


def white_box_accuracy(grid: RobustnessGrid, epsilon: float) -> float:
    for index, label in enumerate(grid.taxonomy):
        if label is AttackTaxonomy.WHITE_BOX:
            return float(grid.column(epsilon)[index])
    raise GridError("grid has no white-box row")
