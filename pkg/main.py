"""
Command-line entry point: edit, train, generate corpora, evaluate, ablate, inspect
"""

import functools
import json
import logging
from pathlib import Path

import click
import torch

from config import PipelineConfig, load_config, seeded_checkpoint
from database.crud import RunCRUD
from database.database import init_database
from evaluation.benchmark import load_benchmark
from evaluation.report import evaluate_run
from exceptions import ConfigError, EditorError, ValidationError
from inpaint.data import SyntheticInpaintDataset
from inpaint.train import evaluate_inpainter, split_dataset, train_inpainter
from inpaint.vae import InpaintModel, load_checkpoint
from pipeline.ablation import VARIANTS, ablation_trends, run_ablation
from pipeline.editor import ImageEditor, replay_run
from pipeline.inspection import LAYERS, inspect_hypergraph
from pipeline.synthetic import build_synthetic_benchmark
from redis_queue.background_tasks import run_edit_job
from redis_queue.queue_config import get_queue
from redis_queue.worker import start_worker
from segmentation.corpus import generate_synthetic_corpus, load_corpus, save_corpus
from segmentation.train import train_reason_seg
from server import create_app
from tools import load_image

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT, force=True)


def _remember(ctx, param, value):
    # Flags given after the subcommand override the ones given before it.
    if value is not None and value is not False:
        ctx.ensure_object(dict)[param.name] = value
    return value


GLOBAL_OPTIONS = (
    click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
                 expose_value=False, callback=_remember, help="TOML, YAML or JSON config file."),
    click.option("--seed", type=int, default=None, expose_value=False, callback=_remember,
                 help="Seed for every stage (overrides the config)."),
    click.option("--out", type=click.Path(file_okay=False), default=None, expose_value=False,
                 callback=_remember, help="Output directory (overrides the config)."),
    click.option("--verbose", is_flag=True, default=False, expose_value=False, callback=_remember,
                 help="Debug logging."),
)


def global_options(func):
    for option in reversed(GLOBAL_OPTIONS):
        func = option(func)
    return func


def reports_errors(func):
    """Map editor errors to a ❌ line and exit status 1"""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except EditorError as error:
            click.echo(f"❌ {error}", err=True)
            click.get_current_context().exit(1)

    return wrapper


def pipeline_config(ctx: click.Context, **overrides) -> PipelineConfig:
    options = ctx.ensure_object(dict)
    configure_logging(options.get("verbose", False))
    return load_config(options.get("config"), seed=options.get("seed"), output_dir=options.get("out"), **overrides)


def _seeded(ctx: click.Context, section, config: PipelineConfig, **updates):
    """Training section with ``--seed`` applied when it was given"""
    if ctx.ensure_object(dict).get("seed") is not None:
        updates["seed"] = config.seed
    return section.copy(update={k: v for k, v in updates.items() if v is not None})


@click.group()
@global_options
@click.pass_context
def cli(ctx):
    """Instruction-driven image editing: promptist, reasoning segmentation, inpainting"""
    ctx.ensure_object(dict)


@cli.command()
@global_options
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.argument("instruction")
@click.option("--background", is_flag=True, help="Queue the edit on Redis when a server answers.")
@click.option("--no-blend", is_flag=True, help="Keep the raw inpainter output.")
@click.option("--run-name", default=None, help="Run directory name (defaults to a timestamp).")
@click.pass_context
@reports_errors
def edit(ctx, image, instruction, background, no_blend, run_name):
    """Edit IMAGE according to INSTRUCTION"""
    config = pipeline_config(ctx, blend=False if no_blend else None)
    if background:
        queue = get_queue(config.redis_url)
        if queue is not None:
            job = queue.enqueue(run_edit_job, str(image), instruction, config.snapshot(), None, run_name,
                                job_timeout="10m")
            click.echo(f"🚀 Queued edit job {job.id}")
            return
        click.echo("⚠️ Redis is not available; processing synchronously", err=True)
    artifact = ImageEditor(config).edit(image, instruction, run_name=run_name)
    click.echo(f"✅ {artifact.plan.category.value} edit written to {artifact.run_dir}")


@cli.command()
@global_options
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.pass_context
@reports_errors
def replay(ctx, run_dir):
    """Re-execute a run directory from its config snapshot"""
    options = ctx.ensure_object(dict)
    configure_logging(options.get("verbose", False))
    out_dir = options.get("out") or Path(run_dir).parent / "replays"
    artifact = replay_run(run_dir, out_dir)
    click.echo(f"✅ Replayed {run_dir} into {artifact.run_dir}")


@cli.command("train-inpaint")
@global_options
@click.option("--no-hypergraph", is_flag=True, help="Train the plain VAE without hypergraph blocks.")
@click.option("--steps", type=int, default=None)
@click.option("--num-images", type=int, default=None)
@click.pass_context
@reports_errors
def train_inpaint(ctx, no_hypergraph, steps, num_images):
    """Train the inpainting VAE on the synthetic shapes corpus"""
    config = pipeline_config(ctx)
    inpaint_config = _seeded(ctx, config.inpaint, config, steps=steps, num_images=num_images,
                             use_hypergraph=False if no_hypergraph else None)
    out_dir = Path(config.output_dir) / ("inpaint" if inpaint_config.use_hypergraph else "inpaint_plain")
    train_set, held_out = split_dataset(inpaint_config)
    click.echo(f"🚀 Training inpainter ({inpaint_config.steps} steps) into {out_dir}")
    model, _ = train_inpainter(train_set, inpaint_config, checkpoint_dir=out_dir,
                               log_path=out_dir / "loss.csv", progress=True)
    scores = evaluate_inpainter(model, held_out)
    (out_dir / "eval.json").write_text(json.dumps(scores, indent=2, sort_keys=True))
    click.echo(f"✅ Held-out masked MSE {scores['model_mse']:.5f} (mean fill {scores['mean_fill_mse']:.5f})")


@cli.command("train-reseg")
@global_options
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Corpus written by gen-corpus --kind seg (generated in memory otherwise).")
@click.option("--steps", type=int, default=None)
@click.pass_context
@reports_errors
def train_reseg(ctx, corpus_dir, steps):
    """Train the reasoning-segmentation model"""
    config = pipeline_config(ctx)
    seg_config = _seeded(ctx, config.reason_seg, config, steps=steps)
    if corpus_dir:
        corpus = load_corpus(corpus_dir)
    else:
        corpus = generate_synthetic_corpus(seg_config.seed, seg_config.corpus_size, seg_config.image_size,
                                           seg_config.family_ratios)
    out_dir = Path(config.output_dir) / "reason_seg"
    click.echo(f"🚀 Training reasoning segmentation ({seg_config.steps} steps) into {out_dir}")
    _, report = train_reason_seg(corpus, config.losses, seg_config, checkpoint_dir=out_dir,
                                 log_path=out_dir / "loss.csv", progress=True)
    (out_dir / "eval.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    click.echo(f"✅ Held-out gIoU {report.giou:.4f}, cIoU {report.ciou:.4f}")


@cli.command("gen-corpus")
@global_options
@click.option("--kind", type=click.Choice(["seg", "inpaint", "benchmark"]), required=True)
@click.option("--n", "count", type=int, default=100, show_default=True)
@click.option("--image-size", type=int, default=64, show_default=True)
@click.pass_context
@reports_errors
def gen_corpus(ctx, kind, count, image_size):
    """Write a synthetic corpus or benchmark under the output directory"""
    config = pipeline_config(ctx)
    out_dir = Path(config.output_dir)
    if kind == "seg":
        samples = generate_synthetic_corpus(config.seed, count, image_size, config.reason_seg.family_ratios)
        target = save_corpus(samples, out_dir / "seg_corpus")
    elif kind == "inpaint":
        target = SyntheticInpaintDataset(count, image_size, config.seed).write_cache(out_dir / "inpaint_corpus")
    else:
        target = build_synthetic_benchmark(out_dir / "benchmark", count, config.seed, image_size)
    click.echo(f"✅ Wrote {count} {kind} samples to {target}")


@cli.command("eval")
@global_options
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--edited", type=click.Path(exists=True, file_okay=False), required=True,
              help="Directory of edited images named like the source images.")
@click.option("--full-image", is_flag=True, help="Score the whole image instead of the background.")
@click.option("--method", default="Ours", show_default=True)
@click.pass_context
@reports_errors
def evaluate(ctx, manifest, edited, full_image, method):
    """Score edited images against a benchmark manifest"""
    config = pipeline_config(ctx)
    records = load_benchmark(manifest)
    edited_paths = [Path(edited) / record.source_image.name for record in records]
    missing = [str(p) for p in edited_paths if not p.exists()]
    if missing:
        raise ValidationError(f"Missing edited images: {', '.join(missing)}")
    out_dir = Path(config.output_dir) / "eval"
    report = evaluate_run(records, edited_paths, reports_out=out_dir, background=not full_image, method=method)
    click.echo((out_dir / "table.txt").read_text())
    click.echo(f"✅ Scored {len(records)} records ({report['region']}); report in {out_dir}")


@cli.command()
@global_options
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--variant", "variants", type=click.Choice(VARIANTS), multiple=True,
              help="Variants to run (all by default).")
@click.option("--seeds", type=int, multiple=True,
              help="Seeds to run; checkpoint paths may contain {seed} (defaults to the config seed).")
@click.pass_context
@reports_errors
def ablate(ctx, manifest, variants, seeds):
    """Compare mask sources and hypergraph blocks on a benchmark"""
    config = pipeline_config(ctx)
    out_dir = Path(config.output_dir) / "ablation"
    reports = run_ablation(manifest, config, variants or VARIANTS, out_dir, seeds=seeds or None)
    if not reports:
        click.echo("⚠️ Every variant was skipped; train the models first", err=True)
        ctx.exit(1)
    click.echo((out_dir / "table.txt").read_text())
    for variant, report in reports.items():
        click.echo(f"{variant}: mask gIoU {report['mask_giou']:.4f}, masked MSE {report['masked_region_mse']}")
    for name, trend in ablation_trends(reports).items():
        if trend["majority"] is None:
            continue
        mark = "✅" if trend["majority"] else "⚠️"
        click.echo(f"{mark} {name}: {trend['wins']}/{len(trend['per_seed'])} seeds show the expected direction")


@cli.command("inspect-hypergraph")
@global_options
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.option("--tau", type=float, default=None, help="Distance threshold (median distance by default).")
@click.option("--layer", type=click.Choice(LAYERS), default="encoder", show_default=True)
@click.pass_context
@reports_errors
def inspect_hypergraph_command(ctx, image, tau, layer):
    """Dump the hypergraph of a middle block as JSON"""
    config = pipeline_config(ctx)
    if tau is not None and not tau > 0:
        raise ConfigError("--tau must be positive")
    if config.inpaint_checkpoint:
        model = load_checkpoint(seeded_checkpoint(config.inpaint_checkpoint, config.seed))
    else:
        logger.warning("No inpainting checkpoint configured; inspecting an untrained model")
        torch.manual_seed(config.seed)
        model = InpaintModel(config.inpaint)
    click.echo(json.dumps(inspect_hypergraph(model, load_image(image), tau, layer)))


@cli.command()
@global_options
@click.option("--limit", type=int, default=20, show_default=True)
@click.pass_context
@reports_errors
def runs(ctx, limit):
    """List recent runs recorded in the database"""
    config = pipeline_config(ctx)
    if not config.database_url:
        raise ConfigError("No database_url configured")
    with init_database(config.database_url)() as db:
        for run in RunCRUD.get_recent_runs(db, limit=limit):
            click.echo(f"{run.id}\t{run.status}\t{run.category or '-'}\t{run.instruction}\t{run.run_dir}")


@cli.command()
@global_options
@click.pass_context
@reports_errors
def worker(ctx):
    """Process queued edit jobs"""
    config = pipeline_config(ctx)
    if not start_worker(config.redis_url):
        ctx.exit(1)


@cli.command("serve-promptist")
@global_options
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.pass_context
def serve_promptist(ctx, host, port):
    """Serve the instruction-analysis endpoint"""
    import uvicorn

    configure_logging(ctx.ensure_object(dict).get("verbose", False))
    click.echo(f"🚀 Promptist listening on http://{host}:{port}/analyze")
    uvicorn.run(create_app(), host=host, port=port, log_level="info")


if __name__ == "__main__":
    cli()
