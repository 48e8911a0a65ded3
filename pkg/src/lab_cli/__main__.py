"""Command line entrypoint for the gray-box adversarial training lab."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

import click
import httpx
from dotenv import load_dotenv
from pydantic import ValidationError

from src.attacks import AttackError, AttackMethod
from src.checkpoint_bank import MANIFEST_NAME, CheckpointError, load_manifest
from src.mnist_data import IdxFormatError, dataset_checksum, find_mnist_files, load_idx
from src.mnist_data.fetch import MNIST_MIRROR, fetch_mnist, fetch_steps
from src.nn_engine import LabelRangeError, NonFiniteGradientError, ShapeMismatchError
from src.robustness_eval import (
    DEFAULT_EPSILONS,
    EVAL_ATTACK_SEED,
    CheckpointRef,
    GridError,
    build_grid,
    load_target,
    sources_from_manifest,
)
from src.training import ConfigError, TrainConfig, TrainMethod, load_config, pretrain_ensemble, train
from src.training.config import DEFAULT_DATA_DIR

from .grid_csv import write_grid_csv
from .report import build_report

load_dotenv(override=False)

DEFAULT_LOG_LEVEL = "info"
DEFAULT_WORKERS = 4
ATTACK_CHOICES = [method.value for method in AttackMethod] + ["fgsmll", "fgsmrand"]

logger = logging.getLogger(__name__)

# Domain errors that end a command with a message instead of a traceback.
DOMAIN_ERRORS = (
    AttackError,
    CheckpointError,
    FileNotFoundError,
    GridError,
    IdxFormatError,
    LabelRangeError,
    NonFiniteGradientError,
    ShapeMismatchError,
    ValidationError,
)


def _parse_epsilons(value: str | None) -> tuple[float, ...]:
    if value is None:
        return DEFAULT_EPSILONS
    try:
        epsilons = tuple(float(part) for part in value.split(",") if part.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}", param_hint="--epsilons") from None
    if not epsilons or any(eps < 0 for eps in epsilons):
        raise click.BadParameter("epsilons must be a non-empty list of values >= 0", param_hint="--epsilons")
    return epsilons


def _load_config(config: Path | None, overrides: dict[str, Any]) -> TrainConfig:
    try:
        return load_config(config, overrides)
    except ConfigError as exc:
        raise click.UsageError(f"invalid config field {exc}") from exc


@click.group()
@click.option("--log-level", "log_level", default=DEFAULT_LOG_LEVEL, show_default=True)
def cli(log_level: str) -> None:
    logging.basicConfig(level=log_level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


@cli.command("train")
@click.option("--config", "config", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--method", "method", type=click.Choice([m.value for m in TrainMethod]))
@click.option("--network", "network")
@click.option("--epochs", "epochs", type=int)
@click.option("--batch-size", "batch_size", type=int)
@click.option("--k", "k", type=int)
@click.option("--p", "p", type=int)
@click.option("--attack", "attack", type=click.Choice(ATTACK_CHOICES))
@click.option("--epsilon-train", "epsilon_train", type=float)
@click.option("--d", "d", type=float)
@click.option("--el", "el", type=float)
@click.option("--t-iterations", "t_iterations", type=int)
@click.option("--ensemble", "ensemble", multiple=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--init-seed", "init_seed", type=int)
@click.option("--shuffle-seed", "shuffle_seed", type=int)
@click.option("--attack-seed", "attack_seed", type=int)
@click.option("--run-id", "run_id")
@click.option("--fine-grained/--no-fine-grained", "fine_grained", default=None)
@click.option("--max-iterations", "max_iterations", type=int)
@click.option("--data-dir", "data_dir", envvar="GAB_DATA_DIR", type=click.Path(file_okay=False, path_type=Path))
@click.option("--runs-dir", "runs_dir", envvar="GAB_RUNS_DIR", type=click.Path(file_okay=False, path_type=Path))
def train_command(config: Path | None, ensemble: tuple[Path, ...], **overrides: Any) -> None:
    """Train one model; prints the run directory."""
    if ensemble:
        overrides["ensemble"] = list(ensemble)
    cfg = _load_config(config, overrides)
    try:
        record = train(cfg)
    except ConfigError as exc:
        raise click.UsageError(f"invalid config field {exc}") from exc
    except DOMAIN_ERRORS as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(str(record.run_dir))


@cli.command("pretrain-ensemble")
@click.option("--target", "target", required=True, help="Net trained by the EAT run, e.g. netA.")
@click.option("--config", "config", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--epochs", "epochs", type=int)
@click.option("--init-seed", "init_seed", type=int)
@click.option("--workers", "workers", type=int)
@click.option("--data-dir", "data_dir", envvar="GAB_DATA_DIR", type=click.Path(file_okay=False, path_type=Path))
@click.option("--runs-dir", "runs_dir", envvar="GAB_RUNS_DIR", type=click.Path(file_okay=False, path_type=Path))
def pretrain_command(target: str, config: Path | None, workers: int | None, **overrides: Any) -> None:
    """Normally train the static members of an EAT setup; prints their best checkpoints."""
    cfg = _load_config(config, {**overrides, "method": TrainMethod.NORMAL.value, "network": target})
    try:
        paths = pretrain_ensemble(cfg, target, workers=workers)
    except ConfigError as exc:
        raise click.UsageError(f"invalid config field {exc}") from exc
    except DOMAIN_ERRORS as exc:
        raise click.ClickException(str(exc)) from exc
    for path in paths:
        click.echo(str(path))


def _collect_sources(manifests: tuple[Path, ...]) -> tuple[list[CheckpointRef], list[dict[str, Any]]]:
    sources: list[CheckpointRef] = []
    runs: list[dict[str, Any]] = []
    seen: dict[str, Path] = {}
    for path in manifests:
        manifest = load_manifest(path)
        if manifest.run_id in seen:
            raise click.UsageError(f"overlapping run id {manifest.run_id!r} in {seen[manifest.run_id]} and {path}")
        seen[manifest.run_id] = path
        sources.extend(sources_from_manifest(path))
        runs.append(
            {
                "run_id": manifest.run_id,
                "config_hash": manifest.config_hash,
                "seeds": manifest.seeds,
                "dataset_checksum": manifest.dataset_checksum,
            }
        )
    return sources, runs


@cli.command("evaluate")
@click.option("--target", "target_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--sources", "manifests", multiple=True, type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Run manifest whose snapshots source the adversaries; repeatable.")
@click.option("--epsilons", "epsilons", help="Comma-separated, default 0,0.05,...,0.5.")
@click.option("--attack", "attack", type=click.Choice(ATTACK_CHOICES), default=AttackMethod.FGSM.value, show_default=True)
@click.option("--seed", "seed", type=int, default=EVAL_ATTACK_SEED, show_default=True)
@click.option("--workers", "workers", type=int, default=DEFAULT_WORKERS, show_default=True)
@click.option("--data-dir", "data_dir", envvar="GAB_DATA_DIR", default=DEFAULT_DATA_DIR,
              type=click.Path(file_okay=False, path_type=Path))
@click.option("--out", "out", required=True, type=click.Path(dir_okay=False, path_type=Path))
def evaluate_command(
    target_path: Path,
    manifests: tuple[Path, ...],
    epsilons: str | None,
    attack: str,
    seed: int,
    workers: int,
    data_dir: Path,
    out: Path,
) -> None:
    """Robustness grid of one target against every snapshot of the source runs."""
    eps = _parse_epsilons(epsilons)
    method = AttackMethod.parse(attack)
    try:
        target = load_target(target_path)
        sources, runs = _collect_sources(manifests)
        if not manifests:
            sources = [target.ref]
        files = find_mnist_files(data_dir)
        testset = load_idx(files["test_images"], files["test_labels"], split="test")
        grid = build_grid(target, sources, eps, method, testset, workers=workers, seed=seed)
    except DOMAIN_ERRORS as exc:
        raise click.ClickException(str(exc)) from exc

    target_manifest = target_path.parent.parent / MANIFEST_NAME
    provenance: dict[str, Any] = {
        "eval_seed": seed,
        "test_checksum": dataset_checksum(testset),
        "source_runs": runs,
    }
    if target_manifest.exists():
        manifest = load_manifest(target_manifest)
        provenance.update(config_hash=manifest.config_hash, seeds=manifest.seeds, train_checksum=manifest.dataset_checksum)
    write_grid_csv(grid, out, provenance)
    logger.info("Grid of %d sources x %d epsilons written to %s", len(grid.sources), len(eps), out)
    click.echo(str(out))


@cli.command("report")
@click.argument("grids", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out-dir", "out_dir", required=True, type=click.Path(file_okay=False, path_type=Path))
def report_command(grids: tuple[Path, ...], out_dir: Path) -> None:
    """A_w table, per-run minima and SVG robustness plots from grid CSVs."""
    try:
        bundle = build_report(grids, out_dir)
    except (GridError, KeyError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(str(bundle.aw_table))
    for svg in bundle.svgs:
        click.echo(str(svg))


@cli.command("fetch-data")
@click.option("--data-dir", "data_dir", envvar="GAB_DATA_DIR", default=DEFAULT_DATA_DIR,
              type=click.Path(file_okay=False, path_type=Path))
@click.option("--base-url", "base_url", default=MNIST_MIRROR, show_default=True)
@click.option("--print-only", "print_only", is_flag=True, help="Print the download steps instead of running them.")
def fetch_command(data_dir: Path, base_url: str, print_only: bool) -> None:
    """Download the four MNIST IDX files."""
    if print_only:
        for step in fetch_steps(data_dir, base_url):
            click.echo(step)
        return
    try:
        for path in fetch_mnist(data_dir, base_url=base_url):
            click.echo(str(path))
    except (httpx.HTTPError, OSError) as exc:
        raise click.ClickException(f"download failed: {exc}; run with --print-only for manual steps") from exc


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
