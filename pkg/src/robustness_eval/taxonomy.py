"""Attack taxonomy of a (source, target) checkpoint pair."""

from __future__ import annotations

import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from src.checkpoint_bank import MethodTag, load_manifest


class AttackTaxonomy(str, Enum):
    WHITE_BOX = "white-box"
    BLACK_BOX = "black-box"
    EXTENDED_WHITE_BOX = "extended-white-box"
    EXTENDED_BLACK_BOX = "extended-black-box"


@dataclass(frozen=True)
class CheckpointRef:
    run_id: str
    network: str
    method: MethodTag
    iteration: int
    path: Path | None = None
    is_best: bool = False

    @property
    def key(self) -> tuple[str, int]:
        return self.run_id, self.iteration


def classify(source: CheckpointRef, target: CheckpointRef) -> AttackTaxonomy:
    """Exactly one label per pair.

    Same checkpoint is white-box. Other snapshots of the target's own run are
    extended white-box when network and method match. A foreign run's best
    model is black-box; any other foreign snapshot is extended black-box.
    """
    if source.key == target.key:
        return AttackTaxonomy.WHITE_BOX
    if source.run_id == target.run_id:
        if source.network == target.network and source.method == target.method:
            return AttackTaxonomy.EXTENDED_WHITE_BOX
        return AttackTaxonomy.EXTENDED_BLACK_BOX
    return AttackTaxonomy.BLACK_BOX if source.is_best else AttackTaxonomy.EXTENDED_BLACK_BOX


def sources_from_manifest(path: str | os.PathLike[str]) -> list[CheckpointRef]:
    """Every snapshot a run manifest lists, in iteration order."""
    path = Path(path)
    manifest = load_manifest(path)
    ckpt_dir = path.parent / "ckpt"
    return [
        CheckpointRef(
            run_id=manifest.run_id,
            network=manifest.network,
            method=entry.method,
            iteration=entry.iteration,
            path=ckpt_dir / entry.file,
            is_best=entry.iteration == manifest.best_iteration,
        )
        for entry in sorted(manifest.snapshots, key=lambda entry: entry.iteration)
    ]
