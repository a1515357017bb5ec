"""
Command line: ``python -m cli <command>``.

Every command reads an optional ``key=value`` config file (``--config``);
flags given on the command line override it. ``python -m cli --describe``
lists every key with its default.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 failed
verification.
"""
import functools
from pathlib import Path
from typing import List, Optional

import numpy as np
import typer

from config import ExperimentConfig
from utils.errors import MilError, VerificationError
from utils.logging_config import get_logger

log = get_logger(__name__)
app = typer.Typer(add_completion=False, help="Attention-based MIL on whole-slide tile bags.")

GRADCHECK_TOLERANCE = 1e-4
ARCHITECTURES = ("amil", "admil", "hybrid")

ConfigOption = typer.Option(None, "--config", "-c", help="key=value config file")


def handles_errors(fn):
    """Map the error hierarchy to exit codes."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except MilError as exc:
            log.error("%s failed - %s", fn.__name__, exc)
            typer.echo(f"Error: {exc}", err=True)
            raise typer.Exit(exc.exit_code)
        except OSError as exc:
            log.error("%s failed - %s", fn.__name__, exc)
            typer.echo(f"Error: {exc}", err=True)
            raise typer.Exit(3)
    return wrapper


def _architectures(name: str) -> List[str]:
    return list(ARCHITECTURES) if name == "all" else [name]


@app.callback(invoke_without_command=True)
def main(ctx: typer.Context,
         describe: bool = typer.Option(False, "--describe", help="Print every config key and its default")):
    if describe:
        typer.echo(ExperimentConfig.describe())
        raise typer.Exit()
    if ctx.invoked_subcommand is None:
        typer.echo(ctx.get_help())


@app.command()
@handles_errors
def synth(
    kind: str = typer.Option("bags", help="bags | planted | pyramid"),
    out: Optional[Path] = typer.Option(None, help="Output directory"),
    num_bags: Optional[int] = typer.Option(None, help="Bags (or slides for a pyramid corpus)"),
    embed_dim: Optional[int] = typer.Option(None, help="Embedding width M"),
    class_separation: Optional[float] = typer.Option(None, help="Signal strength"),
    base_size: int = typer.Option(1024, help="Pyramid base level edge in pixels"),
    seed: Optional[int] = typer.Option(None),
    config: Optional[Path] = ConfigOption,
):
    """Generate synthetic feature-space bags or a synthetic image pyramid corpus."""
    from bagdata import PlantedConfig, SyntheticConfig, generate_planted, generate_synthetic, save_bags
    from wsipipe import SyntheticPyramidConfig, generate_pyramid_corpus

    cfg = ExperimentConfig.load(config, num_bags=num_bags, embed_dim=embed_dim,
                                class_separation=class_separation, seed=seed)
    out = out or cfg.output_dir / f"synthetic-{kind}"
    if kind == "bags":
        bags = generate_synthetic(SyntheticConfig(
            num_bags=cfg.num_bags, n_range=(cfg.bag_size_min, cfg.bag_size_max), embed_dim=cfg.embed_dim,
            positive_instance_rate=cfg.positive_instance_rate, class_separation=cfg.class_separation,
            label_noise=cfg.label_noise, seed=cfg.seed))
        typer.echo(f"Manifest: {save_bags(bags, out)}")
    elif kind == "planted":
        bags = generate_planted(PlantedConfig(num_bags=cfg.num_bags, embed_dim=cfg.embed_dim,
                                              class_separation=cfg.class_separation, seed=cfg.seed))
        typer.echo(f"Manifest: {save_bags(bags, out)}")
    elif kind == "pyramid":
        records = generate_pyramid_corpus(
            SyntheticPyramidConfig(num_slides=num_bags or 4, base_size=base_size, seed=cfg.seed), out)
        typer.echo(f"Slide manifest: {Path(out) / 'slides.csv'} ({len(records)} slides)")
    else:
        raise typer.BadParameter(f"unknown kind '{kind}'", param_hint="--kind")


@app.command()
@handles_errors
def preprocess(
    slides: Optional[Path] = typer.Option(None, help="Slide manifest (slide_id,label,path,mpp)"),
    out: Optional[Path] = typer.Option(None, help="Output directory for the store and bags.csv"),
    magnification: Optional[str] = typer.Option(None, help="5x | 10x | 20x"),
    tile_size: Optional[int] = typer.Option(None),
    extractor: Optional[str] = typer.Option(None, help="Registered extractor or module:Class"),
    workers: Optional[int] = typer.Option(None),
    seed: Optional[int] = typer.Option(None),
    config: Optional[Path] = ConfigOption,
):
    """Run the tile pipeline on every slide of a manifest."""
    from utils.metadata import SlideRecord, read_records
    from wsipipe import PipelineConfig, build_extractor, run_pipeline

    cfg = ExperimentConfig.load(config, manifest=slides, magnification=magnification, tile_size=tile_size,
                                extractor=extractor, workers=workers, seed=seed)
    if cfg.manifest is None:
        raise typer.BadParameter("a slide manifest is required", param_hint="--slides")
    pipeline_cfg = PipelineConfig.from_experiment(cfg)
    summary = run_pipeline(read_records(cfg.manifest, SlideRecord), pipeline_cfg,
                           out or cfg.output_dir / f"embeddings-{cfg.magnification}",
                           extractor=build_extractor(cfg.extractor, tile_size=cfg.tile_size))
    for slide_id, kept, discarded in summary.per_slide:
        typer.echo(f"{slide_id}: kept {kept}, discarded {discarded}")
    for slide_id in summary.failed:
        typer.echo(f"{slide_id}: failed")
    typer.echo(f"Store: {summary.store_path}")
    typer.echo(f"Manifest: {summary.manifest_path}")


@app.command()
@handles_errors
def train(
    manifest: Optional[Path] = typer.Option(None, help="Dataset manifest (source_id,label,store_path)"),
    architecture: Optional[str] = typer.Option(None, help="amil | admil | hybrid"),
    epochs: Optional[int] = typer.Option(None),
    lr0: Optional[float] = typer.Option(None),
    k_folds: Optional[int] = typer.Option(None),
    seed: Optional[int] = typer.Option(None),
    out: Optional[Path] = typer.Option(None, help="Checkpoint directory"),
    config: Optional[Path] = ConfigOption,
):
    """k-fold training on the training split; writes fold checkpoints and the best fold."""
    from bagdata import load_bags
    from evalmetrics import write_fold_report
    from milmodels import TrainConfig, save_checkpoint, train_model

    cfg = ExperimentConfig.load(config, manifest=manifest, architecture=architecture, epochs=epochs,
                                lr0=lr0, k_folds=k_folds, seed=seed)
    if cfg.manifest is None:
        raise typer.BadParameter("a dataset manifest is required", param_hint="--manifest")
    out = out or cfg.output_dir / "checkpoints"
    bags = load_bags(cfg.manifest, include_augmented=cfg.augment)
    result = train_model(bags, TrainConfig.from_experiment(cfg), seed=cfg.seed)
    for fold in result.folds:
        save_checkpoint(fold.model, out / f"{cfg.architecture}_fold{fold.fold}.npz")
    best = save_checkpoint(result.model, out / f"{cfg.architecture}_best.npz")
    report = write_fold_report([f.report_row() for f in result.folds], out / f"{cfg.architecture}_folds.csv")
    typer.echo(f"Best fold {result.best_fold} (val AUC {result.folds[result.best_fold].val_auc:.3f}): {best}")
    typer.echo(f"Fold report: {report}")


@app.command("eval")
@handles_errors
def evaluate(
    manifest: Optional[Path] = typer.Option(None, help="Dataset manifest"),
    architecture: str = typer.Option("all", help="amil | admil | hybrid | all"),
    checkpoint: Optional[Path] = typer.Option(None, help="Score this checkpoint on every manifest bag instead"),
    runs: Optional[int] = typer.Option(None),
    epochs: Optional[int] = typer.Option(None),
    lr0: Optional[float] = typer.Option(None),
    seed: Optional[int] = typer.Option(None),
    out: Optional[Path] = typer.Option(None, help="Report directory"),
    config: Optional[Path] = ConfigOption,
):
    """Independent runs of split, k-fold training and best-fold test AUC; writes mean ± std rows."""
    from bagdata import labels_of, load_bags
    from evalmetrics import metrics_row, roc_auc, write_fold_report, write_metrics_report, write_roc_points
    from evalmetrics.summary import RunSummary
    from milmodels import TrainConfig, load_checkpoint, predict, run_experiment

    cfg = ExperimentConfig.load(config, manifest=manifest, runs=runs, epochs=epochs, lr0=lr0, seed=seed)
    if cfg.manifest is None:
        raise typer.BadParameter("a dataset manifest is required", param_hint="--manifest")
    out = out or cfg.output_dir / "reports"
    bags = load_bags(cfg.manifest, include_augmented=cfg.augment)

    if checkpoint is not None:
        model = load_checkpoint(checkpoint)
        curve, auc = roc_auc(predict(model, bags), labels_of(bags))
        write_roc_points([curve], out / f"roc_{model.architecture}_external.csv")
        write_metrics_report([metrics_row(model.architecture, f"{cfg.task}-external", cfg.magnification,
                                          RunSummary([auc], auc, 0.0))], out / "metrics.csv")
        typer.echo(f"{model.architecture}\t{cfg.magnification}\t{auc:.3f}")
        return

    rows = []
    for arch in _architectures(architecture):
        train_cfg = TrainConfig.from_experiment(cfg.model_copy(update={"architecture": arch}))
        result = run_experiment(bags, train_cfg, runs=cfg.runs, seed=cfg.seed, balance=cfg.balance)
        write_roc_points([r.curve for r in result.runs], out / f"roc_{arch}.csv")
        write_fold_report(result.fold_rows(), out / f"folds_{arch}.csv")
        row = result.metrics_row(cfg.task, cfg.magnification)
        rows.append(row)
        typer.echo(f"{arch}\t{cfg.magnification}\t{row['auc']}")
    typer.echo(f"Metrics report: {write_metrics_report(rows, out / 'metrics.csv')}")


@app.command()
@handles_errors
def heatmap(
    checkpoint: Path = typer.Option(..., help="Model checkpoint"),
    slide_id: str = typer.Option(..., help="Bag / slide to render"),
    manifest: Optional[Path] = typer.Option(None, help="Dataset manifest holding the slide"),
    slides: Optional[Path] = typer.Option(None, help="Slide manifest; renders onto the thumbnail"),
    tile_size: Optional[int] = typer.Option(None),
    out: Optional[Path] = typer.Option(None, help="Image directory"),
    config: Optional[Path] = ConfigOption,
):
    """Attention heatmap for every model, contribution overlay for additive models."""
    from bagdata import load_bags
    from heatmap import emit_heatmaps
    from milmodels import load_checkpoint
    from utils.errors import InputError
    from utils.metadata import SlideRecord, read_records
    from wsipipe import open_slide

    cfg = ExperimentConfig.load(config, manifest=manifest, tile_size=tile_size)
    if cfg.manifest is None:
        raise typer.BadParameter("a dataset manifest is required", param_hint="--manifest")
    model = load_checkpoint(checkpoint)
    matches = [b for b in load_bags(cfg.manifest) if b.source_id == slide_id]
    if not matches:
        raise InputError(f"{slide_id} is not in {cfg.manifest}")
    source = None
    if slides is not None:
        records = [r for r in read_records(slides, SlideRecord) if r.slide_id == slide_id]
        if not records:
            raise InputError(f"{slide_id} is not in {slides}")
        source = open_slide(records[0])
    for path in emit_heatmaps(model, matches[0], out or cfg.output_dir / "heatmaps", source, cfg.tile_size):
        typer.echo(str(path))


@app.command()
@handles_errors
def gradcheck(
    architecture: str = typer.Option("all", help="amil | admil | hybrid | all"),
    embed_dim: int = typer.Option(8),
    attention_dim: int = typer.Option(4),
    instances: int = typer.Option(3),
    seed: int = typer.Option(0),
):
    """Compare tape gradients with central differences on a random bag."""
    from diffcore import grad_check
    from milmodels import build_model

    worst = 0.0
    for arch in _architectures(architecture):
        rng = np.random.default_rng(seed)
        H = rng.standard_normal((instances, embed_dim))
        label = int(rng.integers(2))
        model = build_model(arch, embed_dim, attention_dim, seed=seed)
        err = grad_check(lambda tape: model.loss(tape, H, label), model.gradcheck_parameters())
        worst = max(worst, err)
        typer.echo(f"{arch}\tmax relative error {err:.3e}")
    if worst > GRADCHECK_TOLERANCE:
        raise VerificationError(f"gradient check failed: {worst:.3e} > {GRADCHECK_TOLERANCE:g}")


if __name__ == "__main__":
    app()
