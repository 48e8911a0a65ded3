import numpy as np
import pytest

from conftest import TINY_CONV, TINY_DENSE
from src.attacks import AttackMethod
from src.checkpoint_bank import MethodTag, RunManifest, RunStore
from src.nn_engine import evaluate, init_parameters
from src.robustness_eval import (
    AttackTaxonomy,
    CheckpointRef,
    GridError,
    LoadedModel,
    RobustnessGrid,
    build_grid,
    classify,
    early_valley,
    evaluate_cell,
    load_target,
    sources_from_manifest,
    white_box_accuracy,
    worst_case,
    worst_case_by_run,
)

SPECS = {TINY_DENSE.name: TINY_DENSE, TINY_CONV.name: TINY_CONV}


def _write_run(runs_dir, run_id, *, method=MethodTag.NORMAL, spec=TINY_DENSE, seed=0, iterations=(0, 8, 16)):
    """A run whose snapshots are distinct random initialisations; the last is best."""
    store = RunStore(runs_dir, RunManifest(run_id=run_id, network=spec.name, method=method))
    for offset, iteration in enumerate(iterations):
        params = init_parameters(spec, seed + offset)
        store.record(params, iteration, offset, "epoch")
    store.save_best(params, iterations[-1], len(iterations) - 1)
    store.write_manifest()
    return store


def _ref(run_id, iteration, *, network="lenet", method=MethodTag.NORMAL, is_best=False):
    return CheckpointRef(run_id, network, method, iteration, is_best=is_best)


def _grid(values, sources, epsilons=(0.3,)):
    target = sources[0]
    return RobustnessGrid(
        target=target,
        sources=tuple(sources),
        epsilons=tuple(epsilons),
        accuracy=np.asarray(values, dtype=np.float64).reshape(len(sources), len(epsilons)),
        attack=AttackMethod.FGSM,
        taxonomy=tuple(classify(ref, target) for ref in sources),
    )


class TestTaxonomy:
    def test_four_way_classification(self):
        target = _ref("gat-s0", 100, method=MethodTag.GAT, is_best=True)
        assert classify(target, target) is AttackTaxonomy.WHITE_BOX
        assert classify(_ref("gat-s0", 40, method=MethodTag.GAT), target) is AttackTaxonomy.EXTENDED_WHITE_BOX
        assert classify(_ref("normal-s0", 100, is_best=True), target) is AttackTaxonomy.BLACK_BOX
        assert classify(_ref("normal-s0", 40), target) is AttackTaxonomy.EXTENDED_BLACK_BOX

    def test_same_run_other_network_is_extended_black_box(self):
        target = _ref("mixed", 10, network="netA")
        assert classify(_ref("mixed", 5, network="netB"), target) is AttackTaxonomy.EXTENDED_BLACK_BOX

    def test_sources_from_manifest(self, tmp_path):
        store = _write_run(tmp_path, "normal-tiny")
        refs = sources_from_manifest(store.manifest_path)
        assert [ref.iteration for ref in refs] == [0, 8, 16]
        assert [ref.is_best for ref in refs] == [False, False, True]
        assert all(ref.path.exists() for ref in refs)


class TestGrid:
    @pytest.fixture
    def runs(self, tmp_path):
        own = _write_run(tmp_path, "gat-tiny", method=MethodTag.GAT, seed=0)
        other = _write_run(tmp_path, "normal-tiny", seed=10)
        return own, other

    def _grid(self, runs, eval_set, epsilons=(0.0, 0.1, 0.3), **kwargs):
        own, other = runs
        target = load_target(own.best_path, spec=TINY_DENSE)
        sources = sources_from_manifest(own.manifest_path) + sources_from_manifest(other.manifest_path)
        return target, build_grid(target, sources, epsilons, AttackMethod.FGSM, eval_set, specs=SPECS, **kwargs)

    def test_target_is_best(self, runs):
        target = load_target(runs[0].best_path, spec=TINY_DENSE)
        assert target.ref.is_best
        assert target.ref.iteration == 16

    def test_clean_column_is_plain_accuracy(self, runs, eval_set):
        target, grid = self._grid(runs, eval_set)
        _, accuracy = evaluate(TINY_DENSE, target.params, eval_set.images, eval_set.labels)
        np.testing.assert_allclose(grid.column(0.0), accuracy)

    def test_rows_ordered_and_labelled(self, runs, eval_set):
        _, grid = self._grid(runs, eval_set)
        assert [ref.key for ref in grid.sources] == [
            ("gat-tiny", 0),
            ("gat-tiny", 8),
            ("gat-tiny", 16),
            ("normal-tiny", 0),
            ("normal-tiny", 8),
            ("normal-tiny", 16),
        ]
        assert grid.taxonomy == (
            AttackTaxonomy.EXTENDED_WHITE_BOX,
            AttackTaxonomy.EXTENDED_WHITE_BOX,
            AttackTaxonomy.WHITE_BOX,
            AttackTaxonomy.EXTENDED_BLACK_BOX,
            AttackTaxonomy.EXTENDED_BLACK_BOX,
            AttackTaxonomy.BLACK_BOX,
        )
        assert grid.accuracy.shape == (6, 3)
        assert ((grid.accuracy >= 0) & (grid.accuracy <= 100)).all()

    def test_duplicate_sources_collapse(self, runs, eval_set):
        own, _ = runs
        target = load_target(own.best_path, spec=TINY_DENSE)
        refs = sources_from_manifest(own.manifest_path)
        grid = build_grid(target, refs + refs, (0.0,), AttackMethod.FGSM, eval_set, specs=SPECS)
        assert len(grid.sources) == 3

    def test_worker_count_does_not_change_results(self, runs, eval_set):
        _, serial = self._grid(runs, eval_set, workers=1, chunk=16)
        _, parallel = self._grid(runs, eval_set, workers=3, chunk=16)
        np.testing.assert_array_equal(serial.accuracy, parallel.accuracy)
        assert serial.sources == parallel.sources

    def test_random_targets_are_reproducible(self, runs, eval_set):
        own, other = runs
        target = load_target(own.best_path, spec=TINY_DENSE)
        sources = sources_from_manifest(other.manifest_path)
        first = build_grid(target, sources, (0.2,), AttackMethod.FGSM_RAND, eval_set, specs=SPECS)
        second = build_grid(target, sources, (0.2,), AttackMethod.FGSM_RAND, eval_set, specs=SPECS)
        np.testing.assert_array_equal(first.accuracy, second.accuracy)

    def test_cell_matches_grid(self, runs, eval_set):
        own, other = runs
        target, grid = self._grid(runs, eval_set, chunk=16)
        ref = sources_from_manifest(other.manifest_path)[1]
        source = LoadedModel.from_ref(ref, TINY_DENSE)
        cell = evaluate_cell(target, source, 0.1, AttackMethod.FGSM, eval_set, chunk=16)
        row = grid.sources.index(ref)
        assert cell == pytest.approx(grid.accuracy[row, grid.epsilon_index(0.1)])

    def test_white_box_row(self, runs, eval_set):
        _, grid = self._grid(runs, eval_set)
        assert white_box_accuracy(grid, 0.3) == grid.column(0.3)[2]

    def test_empty_inputs(self, runs, eval_set):
        target = load_target(runs[0].best_path, spec=TINY_DENSE)
        with pytest.raises(GridError):
            build_grid(target, [], (0.1,), AttackMethod.FGSM, eval_set)
        with pytest.raises(GridError):
            build_grid(target, [target.ref], (), AttackMethod.FGSM, eval_set)
        with pytest.raises(GridError):
            build_grid(target, [target.ref], (-0.1,), AttackMethod.FGSM, eval_set)

    def test_incompatible_source(self, tmp_path, runs, eval_set):
        conv_run = _write_run(tmp_path, "conv-tiny", spec=TINY_CONV)
        target = load_target(runs[0].best_path, spec=TINY_DENSE)
        sources = sources_from_manifest(conv_run.manifest_path)
        with pytest.raises(GridError):
            build_grid(target, sources, (0.1,), AttackMethod.FGSM, eval_set, specs=SPECS)

    def test_source_without_file(self, runs, eval_set):
        target = load_target(runs[0].best_path, spec=TINY_DENSE)
        with pytest.raises(GridError):
            build_grid(target, [_ref("elsewhere", 3, network=TINY_DENSE.name)], (0.1,), AttackMethod.FGSM, eval_set)


class TestSummaries:
    def test_worst_case_is_column_minimum(self):
        sources = [_ref("a", 0, is_best=True), _ref("b", 0), _ref("c", 0)]
        grid = _grid([97.2, 96.6, 98.1], sources)
        assert worst_case(grid, 0.3) == pytest.approx(96.6)

    def test_worst_case_over_several_grids(self):
        first = _grid([97.2, 96.6], [_ref("a", 0), _ref("b", 0)])
        second = _grid([95.0, 99.0], [_ref("c", 0), _ref("a", 0)])
        assert worst_case([first, second], 0.3) == pytest.approx(95.0)
        assert worst_case_by_run([first, second], 0.3) == {"a": 97.2, "b": 96.6, "c": 95.0}

    def test_unknown_epsilon(self):
        grid = _grid([90.0], [_ref("a", 0)])
        with pytest.raises(GridError):
            worst_case(grid, 0.25)

    def test_early_valley(self):
        sources = [_ref("gat", iteration) for iteration in range(0, 100, 10)]
        values = [99.0, 41.0, 80.0, 96.0, 97.0, 98.0, 98.0, 99.0, 99.0, 99.0]
        grid = _grid(values, sources)
        assert early_valley(grid, 0.3) == pytest.approx(41.0)
        assert early_valley(grid, 0.3, fraction=0.1) == pytest.approx(99.0)

    def test_grid_shape_checked(self):
        with pytest.raises(GridError):
            RobustnessGrid(
                target=_ref("a", 0),
                sources=(_ref("a", 0),),
                epsilons=(0.1, 0.2),
                accuracy=np.zeros((1, 1)),
                attack=AttackMethod.FGSM,
                taxonomy=(AttackTaxonomy.WHITE_BOX,),
            )

    def test_missing_white_box_row(self):
        grid = _grid([90.0], [_ref("a", 0)])
        object.__setattr__(grid, "taxonomy", (AttackTaxonomy.BLACK_BOX,))
        with pytest.raises(GridError):
            white_box_accuracy(grid, 0.3)
