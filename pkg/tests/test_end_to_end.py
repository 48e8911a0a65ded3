"""Full-size runs on the real MNIST files. Deselected by default; run with ``pytest -m slow``."""

import os
from pathlib import Path

import numpy as np
import pytest

from src.attacks import AttackMethod
from src.checkpoint_bank import MANIFEST_NAME, MethodTag, RunManifest, RunStore
from src.mnist_data import find_mnist_files, load_mnist
from src.nn_engine import LENET, evaluate, init_parameters
from src.robustness_eval import (
    build_grid,
    early_valley,
    load_target,
    sources_from_manifest,
    white_box_accuracy,
    worst_case,
)
from src.training import build_config, pretrain_ensemble, train
from src.training.ensemble import EAT_SETUPS

pytestmark = pytest.mark.slow

ATTACK_EPSILONS = (0.1, 0.2, 0.3, 0.4)
SWEEP_EPSILONS = (0.1, 0.2, 0.3, 0.4, 0.5)
SEEDS = (0, 1, 2)


@pytest.fixture(scope="module")
def data_dir():
    path = Path(os.getenv("GAB_DATA_DIR", "data"))
    try:
        find_mnist_files(path)
    except FileNotFoundError:
        pytest.skip("MNIST not present; set GAB_DATA_DIR")
    return path


@pytest.fixture(scope="module")
def testset(data_dir):
    return load_mnist(data_dir)[1]


@pytest.fixture(scope="module")
def runs_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("runs")


@pytest.fixture(scope="module")
def run(data_dir, runs_dir):
    """Train once per distinct setting and reuse the record across tests."""
    cache = {}

    def _run(method="normal", network="lenet", seed=0, **values):
        key = (method, network, seed, tuple(sorted((name, str(value)) for name, value in values.items())))
        if key not in cache:
            settings = {
                "method": method,
                "network": network,
                "init_seed": seed,
                "shuffle_seed": seed,
                "attack_seed": seed,
                "data_dir": data_dir,
                "runs_dir": runs_dir,
                **values,
            }
            cache[key] = train(build_config(settings))
        return cache[key]

    return _run


@pytest.fixture(scope="module")
def aw(testset):
    """A_w per epsilon of a run's best model against that run's own snapshots."""
    grids = {}

    def _aw(record, epsilons=SWEEP_EPSILONS, method=AttackMethod.FGSM):
        key = (record.run_id, epsilons, method)
        if key not in grids:
            target = load_target(record.best_checkpoint)
            sources = sources_from_manifest(record.run_dir / MANIFEST_NAME)
            grids[key] = build_grid(target, sources, epsilons, method, testset, workers=4)
        return {eps: worst_case(grids[key], eps) for eps in epsilons}

    return _aw


def test_normal_lenet_reaches_clean_accuracy(run, testset):
    target = load_target(run().best_checkpoint)
    _, accuracy = evaluate(target.spec, target.params, testset.images, testset.labels)
    assert accuracy >= 98.5


def test_normal_worst_case_collapses_with_epsilon(run, aw):
    values = aw(run())
    assert values[0.1] == pytest.approx(93.21, abs=5.0)
    assert values[0.5] < 5.0


def test_fgsm_is_the_strongest_single_step_attack(run, aw):
    record = run()
    per_method = {method: aw(record, ATTACK_EPSILONS, method) for method in AttackMethod}
    for eps in ATTACK_EPSILONS:
        fgsm = per_method[AttackMethod.FGSM][eps]
        assert fgsm <= per_method[AttackMethod.FGSM_LL][eps]
        assert fgsm <= per_method[AttackMethod.FGSM_RAND][eps]


@pytest.mark.parametrize("seed", SEEDS)
def test_gat_beats_at_beats_normal(run, aw, seed):
    gat, at, normal = (aw(run(method, seed=seed)) for method in ("gat", "at", "normal"))
    for eps in SWEEP_EPSILONS:
        assert gat[eps] > at[eps] > normal[eps], eps


def test_gat_worst_case_levels(run, aw):
    gat, at = aw(run("gat")), aw(run("at"))
    assert gat[0.3] == pytest.approx(96.6, abs=4.0)
    assert gat[0.5] - at[0.5] > 30.0


def test_adversarial_training_hides_an_early_valley(run, testset):
    # fine snapshots in the first epoch expose the early sources
    record = run("at", fine_grained=True, fine_grained_interval=50, fine_grained_epochs=1, run_id="at-fgsm-lenet-fine-s0")
    target = load_target(record.best_checkpoint)
    grid = build_grid(target, sources_from_manifest(record.run_dir / MANIFEST_NAME), (0.3,), AttackMethod.FGSM, testset, workers=4)
    assert early_valley(grid, 0.3) <= white_box_accuracy(grid, 0.3) - 15.0


def test_gat_beats_the_best_ensemble(run, aw, data_dir, runs_dir):
    eat_values = []
    for network in EAT_SETUPS:
        base = build_config({"network": network, "data_dir": data_dir, "runs_dir": runs_dir})
        members = pretrain_ensemble(base, network)
        eat_values.append(aw(run("eat", network=network, ensemble=[str(path) for path in members]), (0.4,))[0.4])
    assert aw(run("gat"), (0.4,))[0.4] >= max(eat_values) + 15.0


def test_untrained_target_is_at_chance(testset, tmp_path):
    store = RunStore(tmp_path, RunManifest(run_id="untrained", network="lenet", method=MethodTag.NORMAL))
    params = init_parameters(LENET, 0)
    store.record(params, 0, 0, "initial")
    store.save_best(params, 0, 0)
    store.write_manifest()
    target = load_target(store.best_path)
    grid = build_grid(target, [target.ref], (0.0, 0.1, 0.3, 0.5), AttackMethod.FGSM, testset)
    np.testing.assert_allclose(grid.accuracy, 10.0, atol=2.0)
