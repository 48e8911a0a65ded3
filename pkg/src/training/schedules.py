"""Training regimes: normal, adversarial (AT), ensemble adversarial (EAT) and
gray-box adversarial training (GAT).

Every regime runs the same loop: shuffle, compose a minibatch, take one SGD
step, record snapshots. Only batch composition differs.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt

from src.attacks import AttackSpec, generate_batch_split
from src.checkpoint_bank import (
    INITIAL_SEED,
    RunManifest,
    RunStore,
    SeedBank,
    SeedEvent,
    SnapshotRecorder,
    load_checkpoint,
    maybe_save_seed,
    pick_seed,
    update_moving_average,
)
from src.checkpoint_bank.checkpoint import CheckpointError
from src.mnist_data import BatchPlan, Dataset, batches_per_epoch, dataset_checksum, load_mnist, minibatches, split_validation
from src.nn_engine import (
    NetworkSpec,
    OptimizerState,
    Parameters,
    current_lr,
    evaluate,
    get_spec,
    init_parameters,
    loss_and_grads,
    sgd_momentum_step,
)

from .config import ConfigError, TrainConfig, TrainMethod

logger = logging.getLogger(__name__)
if not logging.getLogger().hasHandlers():
    logging.basicConfig(level=logging.INFO)

# Train accuracy is reported on a fixed prefix of the training split.
TRAIN_ACCURACY_SAMPLES = 5000
_EAT_STREAM = 0xEA7


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    lr: float
    train_accuracy: float
    val_accuracy: float | None
    val_loss: float | None


@dataclass(frozen=True)
class EnsembleMember:
    path: Path
    spec: NetworkSpec
    params: Parameters


@dataclass
class RunRecord:
    run_id: str
    run_dir: Path
    manifest: RunManifest
    best_checkpoint: Path
    best_iteration: int
    loss_log: list[float] = field(default_factory=list)
    epochs: list[EpochStats] = field(default_factory=list)
    compositions: list[tuple[int, int, int]] = field(default_factory=list)
    source_draws: list[int] = field(default_factory=list)
    seed_events: list[SeedEvent] = field(default_factory=list)

    def summary(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "iterations": len(self.loss_log),
            "best_iteration": self.best_iteration,
            "best_checkpoint": str(self.best_checkpoint),
            "epochs": [asdict(stats) for stats in self.epochs],
            "seed_saves": [event.iteration for event in self.seed_events if event.kind == "save"],
        }


def resolve_t(cfg: TrainConfig, per_epoch: int) -> int:
    """Seed pick period: explicit ``t_iterations`` or a fraction of an epoch."""
    if cfg.t_iterations is not None:
        return cfg.t_iterations
    return max(1, round(cfg.t_epoch_fraction * per_epoch))


def eat_source_index(attack_seed: int, iteration: int, members: int) -> int:
    """Uniform draw over ``{current} + ensemble``; 0 is the current state."""
    rng = np.random.default_rng([attack_seed, iteration, _EAT_STREAM])
    return int(rng.integers(0, members + 1))


def load_ensemble(paths: list[Path], spec: NetworkSpec) -> list[EnsembleMember]:
    members = []
    for path in paths:
        try:
            ckpt = load_checkpoint(path)
        except CheckpointError as exc:
            raise ConfigError("ensemble", str(exc)) from exc
        member_spec = get_spec(ckpt.network)
        if member_spec.input_shape != spec.input_shape or member_spec.classes != spec.classes:
            raise ConfigError("ensemble", f"{path}: {ckpt.network} is incompatible with {spec.name}")
        members.append(EnsembleMember(Path(path), member_spec, ckpt.params))
        logger.info("Ensemble member %s (%s, iteration %d)", path, ckpt.network, ckpt.iteration)
    return members


class Trainer:
    """One training run.

    ``train_set``/``val_set``/``spec``/``ensemble`` may be injected; when
    absent they come from ``cfg``. Subclasses may override ``train_step``
    to replay a scripted loss sequence.
    """

    def __init__(
        self,
        cfg: TrainConfig,
        *,
        train_set: Dataset | None = None,
        val_set: Dataset | None = None,
        spec: NetworkSpec | None = None,
        ensemble: list[EnsembleMember] | None = None,
    ) -> None:
        self.cfg = cfg
        self.spec = spec or get_spec(cfg.network)
        if train_set is None:
            full, _ = load_mnist(cfg.resolved_data_dir())
            train_set, val_set = split_validation(full, cfg.validation_size)
        self.train_set = train_set
        self.val_set = val_set if val_set is not None and len(val_set) else None
        if cfg.method is TrainMethod.EAT:
            self.ensemble = ensemble if ensemble is not None else load_ensemble(cfg.ensemble, self.spec)
            if not self.ensemble:
                raise ConfigError("ensemble", "EAT needs at least one pre-trained member")
        else:
            self.ensemble = []

        self.params = init_parameters(self.spec, cfg.init_seed)
        self.optimizer = OptimizerState.create(self.params, lr=cfg.lr, momentum=cfg.momentum, schedule=cfg.lr_schedule)
        self.dropout_rng = np.random.default_rng([cfg.init_seed, 1])
        self.plan = BatchPlan(cfg.batch_size, cfg.shuffle_seed, drop_last=True)
        self.attack = AttackSpec(cfg.attack, cfg.epsilon_train, cfg.attack_seed)
        self.recorder = SnapshotRecorder(
            fine_grained=cfg.fine_grained,
            interval=cfg.fine_grained_interval,
            max_epochs=cfg.fine_grained_epochs,
        )
        self.per_epoch = batches_per_epoch(len(self.train_set), self.plan)
        self.bank = SeedBank(cfg.d, cfg.el, t=resolve_t(cfg, self.per_epoch), gate=cfg.el_gate)
        self.seed_params: dict[int, Parameters] = {INITIAL_SEED: self.params.copy()}

        self.loss_log: list[float] = []
        self.epoch_stats: list[EpochStats] = []
        self.compositions: list[tuple[int, int, int]] = []
        self.source_draws: list[int] = []
        self._best: tuple[float, Parameters, int, int] | None = None

    @property
    def max_iterations(self) -> int:
        if self.cfg.max_iterations is not None:
            return self.cfg.max_iterations
        return self.cfg.epochs * self.per_epoch

    def train_step(self, batch: npt.NDArray[np.floating], labels: npt.NDArray[np.int64], lr: float) -> float:
        loss, grads, _ = loss_and_grads(self.spec, self.params, batch, labels, "train", self.dropout_rng)
        self.params, self.optimizer = sgd_momentum_step(self.params, grads, self.optimizer, lr=lr)
        return loss

    def compose_batch(
        self, images: npt.NDArray[np.floating], labels: npt.NDArray[np.int64], iteration: int
    ) -> npt.NDArray[np.floating]:
        cfg = self.cfg
        m, k, p = len(images), cfg.k or 0, cfg.p or 0
        attack = self.attack.derive(iteration)
        if cfg.method is TrainMethod.NORMAL:
            mixed = images
        elif cfg.method is TrainMethod.AT:
            mixed = generate_batch_split(self.spec, self.params, self.params, images, labels, k, 0, attack)
        elif cfg.method is TrainMethod.EAT:
            source = eat_source_index(cfg.attack_seed, iteration, len(self.ensemble))
            self.source_draws.append(source)
            if source == 0:
                spec, params = self.spec, self.params
            else:
                member = self.ensemble[source - 1]
                spec, params = member.spec, member.params
            mixed = generate_batch_split(spec, params, params, images, labels, k, 0, attack)
        else:
            seed = self.seed_params[self.bank.active_seed]
            mixed = generate_batch_split(self.spec, self.params, seed, images, labels, k, p, attack)
        self.compositions.append((k, p, m - k - p))
        return mixed

    def _after_step(self, store: RunStore, iteration: int, epoch: int, loss: float) -> None:
        if self.cfg.method is not TrainMethod.GAT:
            return
        bank = self.bank
        before = len(bank.events)
        value = update_moving_average(bank, loss)

        def bank_seed(saved: int) -> None:
            self.seed_params[saved] = self.params.copy()
            store.record(self.params, saved + 1, epoch, "seed", value)

        maybe_save_seed(bank, iteration, value, on_save=bank_seed)
        pick_seed(bank, iteration)
        for event in bank.events[before:]:
            store.log_seed_event(event)

    def _snapshot(self, store: RunStore, steps: int, epoch: int, role: str, last_epoch: int) -> None:
        loss = self.loss_log[-1] if self.loss_log else None
        store.record(self.params, steps, epoch, role, loss)
        if self.cfg.best_selection != "validation" or self.val_set is None:
            return
        # candidates: every epoch end, plus the fine snapshots of the last epoch
        if role != "epoch" and epoch != last_epoch:
            return
        val_loss, _ = evaluate(self.spec, self.params, self.val_set.images, self.val_set.labels)
        if self._best is None or val_loss < self._best[0]:
            self._best = (val_loss, self.params.copy(), steps, epoch)

    def _epoch_stats(self, epoch: int, losses: list[float], lr: float) -> EpochStats:
        sample = self.train_set.subset(np.arange(min(len(self.train_set), TRAIN_ACCURACY_SAMPLES)))
        _, train_accuracy = evaluate(self.spec, self.params, sample.images, sample.labels)
        val_loss = val_accuracy = None
        if self.val_set is not None:
            val_loss, val_accuracy = evaluate(self.spec, self.params, self.val_set.images, self.val_set.labels)
        stats = EpochStats(epoch, float(np.mean(losses)) if losses else math.nan, lr, train_accuracy, val_accuracy, val_loss)
        logger.info(
            "Epoch %d: loss %.4f, train acc %.2f%%, val acc %s, lr %g",
            epoch,
            stats.loss,
            train_accuracy,
            "n/a" if val_accuracy is None else f"{val_accuracy:.2f}%",
            lr,
        )
        return stats

    def run(self) -> RunRecord:
        cfg = self.cfg
        manifest = RunManifest(
            run_id=cfg.run_id,
            network=self.spec.name,
            method=cfg.method_tag,
            config_hash=cfg.config_hash(),
            seeds=cfg.seeds(),
            dataset_checksum=dataset_checksum(self.train_set),
        )
        store = RunStore(cfg.resolved_runs_dir(), manifest)
        total = self.max_iterations
        last_epoch = (total - 1) // self.per_epoch if total else 0
        logger.info(
            "Training %s (%s) for %d iterations, %d per epoch",
            cfg.run_id,
            cfg.method_tag.value,
            total,
            self.per_epoch,
        )
        store.record(self.params, 0, 0, "initial")

        iteration = 0
        epoch = 0
        while iteration < total:
            lr = current_lr(self.optimizer, epoch)
            losses: list[float] = []
            for images, labels in minibatches(self.train_set, self.plan, epoch):
                if iteration >= total:
                    break
                batch = self.compose_batch(images, labels, iteration)
                loss = self.train_step(batch, labels, lr)
                self.loss_log.append(loss)
                losses.append(loss)
                self._after_step(store, iteration, epoch, loss)
                iteration += 1
                if iteration % cfg.log_every == 0:
                    logger.debug("Iteration %d: loss %.4f", iteration, loss)
                if self.recorder.after_step(iteration, epoch):
                    self._snapshot(store, iteration, epoch, "fine", last_epoch)
            self._snapshot(store, iteration, epoch, "epoch", last_epoch)
            self.epoch_stats.append(self._epoch_stats(epoch, losses, lr))
            epoch += 1

        if self._best is None:
            best_params, best_iteration, best_epoch = self.params, iteration, max(epoch - 1, 0)
        else:
            _, best_params, best_iteration, best_epoch = self._best
        best_path = store.save_best(best_params, best_iteration, best_epoch)
        store.write_manifest()
        logger.info("Best model of %s at iteration %d: %s", cfg.run_id, best_iteration, best_path)

        record = RunRecord(
            run_id=cfg.run_id,
            run_dir=store.root,
            manifest=store.manifest,
            best_checkpoint=best_path,
            best_iteration=best_iteration,
            loss_log=self.loss_log,
            epochs=self.epoch_stats,
            compositions=self.compositions,
            source_draws=self.source_draws,
            seed_events=list(self.bank.events),
        )
        store.write_json("run_record.json", record.summary())
        return record


def _require(cfg: TrainConfig, method: TrainMethod) -> None:
    if cfg.method is not method:
        raise ConfigError("method", f"expected {method.value}, got {cfg.method.value}")


def train_normal(cfg: TrainConfig, **kwargs: Any) -> RunRecord:
    _require(cfg, TrainMethod.NORMAL)
    return Trainer(cfg, **kwargs).run()


def train_adversarial(cfg: TrainConfig, **kwargs: Any) -> RunRecord:
    _require(cfg, TrainMethod.AT)
    return Trainer(cfg, **kwargs).run()


def train_eat(cfg: TrainConfig, **kwargs: Any) -> RunRecord:
    _require(cfg, TrainMethod.EAT)
    return Trainer(cfg, **kwargs).run()


def train_gat(cfg: TrainConfig, **kwargs: Any) -> RunRecord:
    _require(cfg, TrainMethod.GAT)
    return Trainer(cfg, **kwargs).run()


_REGIMES: dict[TrainMethod, Callable[..., RunRecord]] = {
    TrainMethod.NORMAL: train_normal,
    TrainMethod.AT: train_adversarial,
    TrainMethod.EAT: train_eat,
    TrainMethod.GAT: train_gat,
}


def train(cfg: TrainConfig, **kwargs: Any) -> RunRecord:
    return _REGIMES[cfg.method](cfg, **kwargs)
