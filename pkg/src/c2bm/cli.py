"""Command-line entry point for the pipeline and the explorer service."""

from __future__ import annotations

import json
import logging

import click

from .run import (
    ConfigError,
    RunDirectory,
    StageError,
    default_config,
    load_config,
    run_pipeline,
    stage_discover,
    stage_evaluate,
    stage_generate,
    stage_refine,
    stage_train,
)


def _load(ctx) -> tuple[RunDirectory, dict, bool]:
    opts = ctx.obj
    cfg = load_config(opts["config"]) if opts["config"] else default_config()
    if opts["seed"] is not None:
        cfg["dataset"]["seed"] = opts["seed"]
        cfg["model"]["seed"] = opts["seed"]
    run = RunDirectory(opts["run_dir"])
    return run, cfg, opts["force"]


def _execute(ctx, stage, name: str) -> None:
    try:
        run, cfg, force = _load(ctx)
        run.write_text("config.json", json.dumps(cfg, indent=2))
        ran = stage(run, cfg, force=force)
    except (ConfigError, StageError) as exc:
        raise click.ClickException(str(exc)) from exc
    if ran:
        click.echo(f"{name}: done")
    else:
        click.echo(f"{name}: outputs exist, skipped (use --force to redo)")


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON config; defaults apply when omitted.")
@click.option("--run-dir", type=click.Path(file_okay=False), required=True,
              help="Directory holding all artifacts of this run.")
@click.option("--seed", type=int, default=None,
              help="Override dataset and model seeds from the config.")
@click.option("--force", is_flag=True, help="Redo stages whose outputs exist.")
@click.pass_context
def main(ctx, config, run_dir, seed, force):
    """Causal concept bottleneck pipeline: synthesize data, discover and
    refine a concept graph, train, evaluate, and serve the explorer API."""
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    ctx.obj = {"config": config, "run_dir": run_dir, "seed": seed,
               "force": force}


@main.command()
@click.pass_context
def generate(ctx):
    """Sample the network, split, and fit the feature synthesizer."""
    _execute(ctx, stage_generate, "generate")


@main.command()
@click.pass_context
def discover(ctx):
    """Run greedy equivalence search on the concept labels."""
    _execute(ctx, stage_discover, "discover")


@main.command()
@click.pass_context
def refine(ctx):
    """Orient remaining undirected edges through the configured oracle."""
    _execute(ctx, stage_refine, "refine")


@main.command()
@click.pass_context
def train(ctx):
    """Train the causal bottleneck model on the refined graph."""
    _execute(ctx, stage_train, "train")


@main.command()
@click.pass_context
def evaluate(ctx):
    """Measure accuracy and intervention response on the test split."""
    _execute(ctx, stage_evaluate, "evaluate")


@main.command()
@click.pass_context
def pipeline(ctx):
    """Run every stage in order, skipping finished ones unless --force."""
    try:
        run, cfg, force = _load(ctx)
        executed = run_pipeline(run, cfg, force=force)
    except (ConfigError, StageError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"pipeline: ran {', '.join(executed) if executed else 'nothing'}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--ui", "ui_dir", default=None,
              type=click.Path(exists=True, file_okay=False),
              help="Built explorer assets (frontend/dist) to serve at /.")
@click.pass_context
def serve(ctx, host, port, ui_dir):
    """Serve the explorer API from a trained run directory."""
    from .service import BindFailure, CheckpointMissing, serve as run_server

    try:
        run, _, _ = _load(ctx)
        run_server(run, host=host, port=port, ui_dir=ui_dir)
    except (ConfigError, CheckpointMissing, BindFailure) as exc:
        raise click.ClickException(str(exc)) from exc


if __name__ == "__main__":
    main()
