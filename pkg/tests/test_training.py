import json
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from conftest import TINY_DENSE, decaying_losses, seed_bank_oracle
from src.checkpoint_bank import MethodTag, load_checkpoint, load_manifest
from src.nn_engine import init_parameters
from src.training import (
    ConfigError,
    EnsembleMember,
    Trainer,
    build_config,
    eat_source_index,
    load_config,
    load_ensemble,
    member_configs,
    resolve_t,
    train,
    train_gat,
)


def _config(tmp_path, **values):
    settings = {"network": "lenet", "batch_size": 8, "epochs": 1, "runs_dir": tmp_path / "runs", "validation_size": 0}
    settings.update(values)
    return build_config(settings)


def _best_params(record):
    return load_checkpoint(record.best_checkpoint, spec=TINY_DENSE).params


class ScriptedTrainer(Trainer):
    """Replays a fixed loss sequence instead of stepping the optimiser."""

    def __init__(self, cfg, losses, **kwargs):
        super().__init__(cfg, **kwargs)
        self.script = iter(losses)

    def train_step(self, batch, labels, lr):
        return float(next(self.script))


class DivergingTrainer(Trainer):
    """Trains normally, then adds large weight noise after ``diverge_after`` steps."""

    def __init__(self, cfg, diverge_after, **kwargs):
        super().__init__(cfg, **kwargs)
        self.diverge_after = diverge_after
        self.steps = 0
        self.noise = np.random.default_rng(5)
        self.first_epoch_digest = None

    def train_step(self, batch, labels, lr):
        loss = super().train_step(batch, labels, lr)
        self.steps += 1
        if self.steps == self.diverge_after:
            self.first_epoch_digest = self.params.digest()
        elif self.steps > self.diverge_after:
            for _, layer in self.params.items():
                layer.weight += self.noise.normal(0.0, 3.0, layer.weight.shape).astype(layer.weight.dtype)
        return loss


class TestConfig:
    @pytest.mark.parametrize(
        "method, split",
        [("normal", (0, 0)), ("at", (64, 0)), ("gat", (32, 32))],
    )
    def test_default_split(self, method, split):
        cfg = build_config({"method": method})
        assert (cfg.k, cfg.p) == split

    def test_eat_default_split(self):
        cfg = build_config({"method": "eat", "ensemble": ["member.ckpt"]})
        assert (cfg.k, cfg.p) == (64, 0)

    def test_split_exceeding_batch(self):
        with pytest.raises(ConfigError) as excinfo:
            build_config({"method": "gat", "batch_size": 8, "k": 6, "p": 4})
        assert excinfo.value.field == "k"

    def test_seed_rows_only_for_gat(self):
        with pytest.raises(ConfigError) as excinfo:
            build_config({"method": "at", "p": 2})
        assert excinfo.value.field == "p"

    def test_eat_needs_ensemble(self):
        with pytest.raises(ConfigError) as excinfo:
            build_config({"method": "eat"})
        assert excinfo.value.field == "ensemble"

    def test_ensemble_only_for_eat(self):
        with pytest.raises(ConfigError) as excinfo:
            build_config({"method": "gat", "ensemble": ["member.ckpt"]})
        assert excinfo.value.field == "ensemble"

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as excinfo:
            build_config({"bogus": 1})
        assert excinfo.value.field == "bogus"

    def test_unknown_network(self):
        with pytest.raises(ConfigError) as excinfo:
            build_config({"network": "resnet"})
        assert excinfo.value.field == "network"

    def test_attack_alias_and_run_id(self):
        cfg = build_config({"method": "at", "attack": "fgsmll"})
        assert cfg.method_tag is MethodTag.AT_FGSM_LL
        assert cfg.run_id == "at-fgsmll-lenet-s0"

    def test_config_hash_tracks_values(self):
        assert build_config({}).config_hash() == build_config({}).config_hash()
        assert build_config({}).config_hash() != build_config({"init_seed": 1}).config_hash()

    def test_toml_with_overrides(self, tmp_path):
        path = tmp_path / "gat.toml"
        path.write_text('method = "gat"\nbatch_size = 16\nepochs = 10\n')
        cfg = load_config(path, {"epochs": 3, "k": None})
        assert (cfg.epochs, cfg.k, cfg.p) == (3, 4, 4)

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError) as excinfo:
            load_config(tmp_path / "absent.toml")
        assert excinfo.value.field == "config"

    def test_environment_directories(self, monkeypatch):
        monkeypatch.setenv("GAB_RUNS_DIR", "/tmp/elsewhere")
        assert build_config({}).resolved_runs_dir() == Path("/tmp/elsewhere")


class TestTrainingLoop:
    def test_zero_epochs_keeps_initial_model(self, tmp_path, train_set):
        record = train(_config(tmp_path, epochs=0), train_set=train_set, spec=TINY_DENSE)
        assert record.loss_log == []
        assert record.best_iteration == 0
        assert _best_params(record).digest() == init_parameters(TINY_DENSE, 0).digest()

    def test_snapshots_and_loss_log(self, tmp_path, train_set):
        record = train(_config(tmp_path, epochs=2), train_set=train_set, spec=TINY_DENSE)
        assert len(record.loss_log) == 16
        manifest = load_manifest(record.run_dir / "manifest.json")
        assert [entry.iteration for entry in manifest.snapshots] == [0, 8, 16]
        assert manifest.snapshots[0].roles == ["initial"]
        assert manifest.best_iteration == 16
        assert len(record.epochs) == 2
        summary = json.loads((record.run_dir / "run_record.json").read_text())
        assert summary["iterations"] == 16

    def test_runs_are_reproducible(self, tmp_path, train_set):
        first = train(
            _config(tmp_path / "one", method="at", attack="fgsm-rand", epochs=2), train_set=train_set, spec=TINY_DENSE
        )
        second = train(
            _config(tmp_path / "two", method="at", attack="fgsm-rand", epochs=2), train_set=train_set, spec=TINY_DENSE
        )
        assert first.best_checkpoint.read_bytes() == second.best_checkpoint.read_bytes()
        assert first.loss_log == second.loss_log

    def test_loss_decreases(self, tmp_path, train_set):
        record = train(_config(tmp_path, epochs=10, lr=0.1), train_set=train_set, spec=TINY_DENSE)
        assert np.mean(record.loss_log[-8:]) < np.mean(record.loss_log[:8])

    def test_best_model_from_validation_candidates(self, tmp_path, train_set, val_set):
        cfg = _config(tmp_path, epochs=2, fine_grained=True, fine_grained_interval=4)
        record = train(cfg, train_set=train_set, val_set=val_set, spec=TINY_DENSE)
        # fine snapshot 4 sits inside the first epoch, so it is never a candidate
        assert record.best_iteration in (8, 12, 16)
        manifest = load_manifest(record.run_dir / "manifest.json")
        assert manifest.best_iteration == record.best_iteration
        assert [entry.iteration for entry in manifest.snapshots] == [0, 4, 8, 12, 16]
        assert manifest.entry(8).roles == ["fine", "epoch"]

    @pytest.mark.parametrize("selection, expected", [("validation", 8), ("final", 24)])
    def test_validation_picks_earlier_epoch(self, tmp_path, train_set, val_set, selection, expected):
        cfg = _config(tmp_path, epochs=3, lr=0.1, best_selection=selection)
        trainer = DivergingTrainer(cfg, diverge_after=8, train_set=train_set, val_set=val_set, spec=TINY_DENSE)
        record = trainer.run()
        assert record.best_iteration == expected
        val_losses = [stats.val_loss for stats in record.epochs]
        assert val_losses[0] < min(val_losses[1:])
        if selection == "validation":
            assert _best_params(record).digest() == trainer.first_epoch_digest

    def test_method_mismatch(self, tmp_path, train_set):
        with pytest.raises(ConfigError) as excinfo:
            train_gat(_config(tmp_path), train_set=train_set, spec=TINY_DENSE)
        assert excinfo.value.field == "method"


class TestAdversarialTraining:
    def test_at_composition(self, tmp_path, train_set):
        record = train(_config(tmp_path, method="at"), train_set=train_set, spec=TINY_DENSE)
        assert record.compositions == [(4, 0, 4)] * 8
        assert record.manifest.method is MethodTag.AT_FGSM

    def test_at_with_zero_epsilon_matches_normal(self, tmp_path, train_set):
        normal = train(_config(tmp_path / "normal", epochs=2), train_set=train_set, spec=TINY_DENSE)
        at = train(_config(tmp_path / "at", method="at", epochs=2, epsilon_train=0.0), train_set=train_set, spec=TINY_DENSE)
        assert _best_params(normal).digest() == _best_params(at).digest()

    def test_gat_composition(self, tmp_path, train_set):
        record = train(_config(tmp_path, method="gat"), train_set=train_set, spec=TINY_DENSE)
        assert record.compositions == [(2, 2, 4)] * 8

    def test_gat_seed_bank_follows_loss_trace(self, tmp_path, train_set):
        losses = decaying_losses(200, seed=11)
        cfg = _config(tmp_path, method="gat", epochs=25, t_iterations=5)
        trainer = ScriptedTrainer(cfg, losses, train_set=train_set, spec=TINY_DENSE)
        record = trainer.run()

        events = [(event.kind, event.iteration, event.seed) for event in record.seed_events]
        assert events == seed_bank_oracle(losses, 0.2, 0.5, 5)
        saves = [iteration for kind, iteration, _ in events if kind == "save"]
        assert saves

        manifest = load_manifest(record.run_dir / "manifest.json")
        seeded = [entry.iteration for entry in manifest.snapshots if "seed" in entry.roles]
        assert seeded == [saved + 1 for saved in saves]
        assert set(trainer.seed_params) == {0, *saves}
        logged = (record.run_dir / "seed_bank.jsonl").read_text().splitlines()
        assert len(logged) == len(events)

    def test_resolve_t_from_epoch_fraction(self):
        assert resolve_t(build_config({}), 400) == 100
        assert resolve_t(build_config({"t_iterations": 7}), 400) == 7
        assert resolve_t(build_config({}), 1) == 1


class TestEnsembleTraining:
    def test_source_draw_frequency(self):
        draws = Counter(eat_source_index(5, iteration, 3) for iteration in range(4000))
        assert set(draws) == {0, 1, 2, 3}
        assert draws[0] / 4000 == pytest.approx(0.25, abs=0.03)

    def test_source_draw_is_pure(self):
        assert [eat_source_index(1, i, 2) for i in range(50)] == [eat_source_index(1, i, 2) for i in range(50)]

    def test_eat_with_injected_members(self, tmp_path, train_set):
        members = [EnsembleMember(Path("member.ckpt"), TINY_DENSE, init_parameters(TINY_DENSE, 7))]
        cfg = _config(tmp_path, method="eat", ensemble=["member.ckpt"])
        record = train(cfg, train_set=train_set, spec=TINY_DENSE, ensemble=members)
        assert len(record.source_draws) == 8
        assert set(record.source_draws) <= {0, 1}
        assert record.compositions == [(4, 0, 4)] * 8
        assert members[0].params.digest() == init_parameters(TINY_DENSE, 7).digest()

    def test_missing_member(self, tmp_path):
        with pytest.raises(ConfigError) as excinfo:
            load_ensemble([tmp_path / "absent.ckpt"], TINY_DENSE)
        assert excinfo.value.field == "ensemble"

    def test_member_configs(self):
        base = build_config({"epochs": 2, "init_seed": 3})
        configs = member_configs(base, "netA")
        assert [cfg.network for cfg in configs] == ["netA", "netB", "netC"]
        assert [cfg.init_seed for cfg in configs] == [1003, 2003, 3003]
        assert {cfg.method.value for cfg in configs} == {"normal"}
        assert configs[1].run_id == "pretrain-netA-netB"
        assert all(cfg.epochs == 2 for cfg in configs)

    def test_member_configs_unknown_target(self):
        with pytest.raises(ConfigError) as excinfo:
            member_configs(build_config({}), "lenet")
        assert excinfo.value.field == "network"
