"""On-disk layout of a training run: ``runs/<run-id>/``."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field

from src.nn_engine import Parameters

from .checkpoint import Checkpoint, MethodTag, save_checkpoint
from .seed_bank import SeedEvent

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
SEED_LOG_NAME = "seed_bank.jsonl"
BEST_NAME = "best.ckpt"


def checkpoint_name(iteration: int) -> str:
    return f"iter{iteration:07d}.ckpt"


class SnapshotEntry(BaseModel):
    file: str
    iteration: int
    epoch: int
    method: MethodTag
    loss: float | None = None
    roles: list[str] = Field(default_factory=list)


class RunManifest(BaseModel):
    """Every snapshot of one run, in iteration order, plus run provenance."""

    run_id: str
    network: str
    method: MethodTag
    snapshots: list[SnapshotEntry] = Field(default_factory=list)
    best_iteration: int | None = None
    config_hash: str | None = None
    seeds: dict[str, int] = Field(default_factory=dict)
    dataset_checksum: str | None = None

    def entry(self, iteration: int) -> SnapshotEntry | None:
        for snapshot in self.snapshots:
            if snapshot.iteration == iteration:
                return snapshot
        return None


def load_manifest(path: str | os.PathLike[str]) -> RunManifest:
    return RunManifest.model_validate_json(Path(path).read_text())


class RunStore:
    """Owns the checkpoint directory, manifest and seed-bank log of a run."""

    def __init__(self, runs_dir: str | os.PathLike[str], manifest: RunManifest) -> None:
        self.root = Path(runs_dir) / manifest.run_id
        self.ckpt_dir = self.root / "ckpt"
        self.manifest = manifest
        self.ckpt_dir.mkdir(parents=True, exist_ok=True)
        stale = sorted(self.ckpt_dir.glob("*.ckpt*"))
        if stale:
            logger.warning("Run %s already exists; removing %d old checkpoints", manifest.run_id, len(stale))
            for path in stale:
                path.unlink()
            self.manifest_path.unlink(missing_ok=True)
        self.seed_log = self.root / SEED_LOG_NAME
        self.seed_log.write_text("")
        logger.info("Run directory %s", self.root)

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST_NAME

    @property
    def best_path(self) -> Path:
        return self.ckpt_dir / BEST_NAME

    def _checkpoint(self, params: Parameters, iteration: int, epoch: int, loss: float | None) -> Checkpoint:
        return Checkpoint(
            network=self.manifest.network,
            params=params,
            iteration=iteration,
            epoch=epoch,
            method=self.manifest.method,
            run_id=self.manifest.run_id,
            loss=loss,
        )

    def record(self, params: Parameters, iteration: int, epoch: int, role: str, loss: float | None = None) -> Path:
        """Write ``iter<N>.ckpt`` once per iteration; later roles are merged in."""
        path = self.ckpt_dir / checkpoint_name(iteration)
        existing = self.manifest.entry(iteration)
        if existing is not None:
            if role not in existing.roles:
                existing.roles.append(role)
            return path
        save_checkpoint(self._checkpoint(params, iteration, epoch, loss), path)
        self.manifest.snapshots.append(
            SnapshotEntry(
                file=path.name,
                iteration=iteration,
                epoch=epoch,
                method=self.manifest.method,
                loss=loss,
                roles=[role],
            )
        )
        self.manifest.snapshots.sort(key=lambda entry: entry.iteration)
        return path

    def save_best(self, params: Parameters, iteration: int, epoch: int, loss: float | None = None) -> Path:
        save_checkpoint(self._checkpoint(params, iteration, epoch, loss), self.best_path)
        self.manifest.best_iteration = iteration
        return self.best_path

    def log_seed_event(self, event: SeedEvent) -> None:
        with self.seed_log.open("a") as handle:
            handle.write(json.dumps(asdict(event)) + "\n")

    def write_json(self, name: str, payload: Any) -> Path:
        path = self.root / name
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path

    def write_manifest(self) -> Path:
        self.manifest_path.write_text(self.manifest.model_dump_json(indent=2) + "\n")
        return self.manifest_path


class SnapshotRecorder:
    """Decides which iterations become robustness-plot sources.

    One snapshot per epoch end, plus one every ``interval`` iterations in
    fine-grained mode (optionally only during the first ``max_epochs``).
    """

    def __init__(self, *, fine_grained: bool = False, interval: int = 5, max_epochs: int | None = None) -> None:
        if interval <= 0:
            raise ValueError(f"snapshot interval must be positive, got {interval}")
        self.fine_grained = fine_grained
        self.interval = interval
        self.max_epochs = max_epochs

    def after_step(self, steps: int, epoch: int) -> bool:
        if not self.fine_grained or steps % self.interval:
            return False
        return self.max_epochs is None or epoch < self.max_epochs
