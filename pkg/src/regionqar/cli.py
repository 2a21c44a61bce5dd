"""Command-line entry point: one subcommand per pipeline stage plus
run-all, report, and the annotation server.
"""

from __future__ import annotations

import dataclasses
import json

import click

from .pipeline import Pipeline, PipelineError, RunConfig, STAGE_ORDER, format_report


def _load_config(config, run_dir, seed, mock, threshold,
                 proposals=None, images_dir=None) -> RunConfig:
    cfg = RunConfig.from_ini(config) if config else RunConfig()
    if run_dir is not None:
        cfg.run_dir = run_dir
    if seed is not None:
        cfg.seed = seed
        cfg.run_id = f"run-{seed}"
        cfg.curation = dataclasses.replace(cfg.curation, seed=seed)
        cfg.generation = dataclasses.replace(cfg.generation, seed=seed)
        cfg.train = dataclasses.replace(cfg.train, seed=seed)
        cfg.augment_cfg = dataclasses.replace(cfg.augment_cfg, seed=seed)
    if threshold is not None:
        cfg.threshold = threshold
    if proposals is not None:
        cfg.proposals_path = proposals
    if images_dir is not None:
        cfg.images_dir = images_dir
    if mock:
        cfg.force_mock()
    return cfg


def _common_options(fn):
    for option in (
        click.option("--config", type=click.Path(exists=True), default=None,
                     help="Run config file (ini sections)."),
        click.option("--run-dir", default=None, help="Run directory."),
        click.option("--seed", type=int, default=None, help="Override the run seed."),
        click.option("--force", is_flag=True, help="Re-run the stage even if complete."),
        click.option("--mock", is_flag=True, help="Force all backends to the mock."),
        click.option("--threshold", type=float, default=None,
                     help="Critic score threshold for filtering."),
        click.option("--proposals", default=None,
                     help="Detector proposals file (curate input)."),
        click.option("--images-dir", default=None, help="Directory holding source images."),
    ):
        fn = option(fn)
    return fn


@click.group()
def main():
    """Region-grounded QAR corpus pipeline."""


def _run_commands(commands, config, run_dir, seed, force, mock, threshold,
                  proposals, images_dir, until=None):
    cfg = _load_config(config, run_dir, seed, mock, threshold, proposals, images_dir)
    pipeline = Pipeline(cfg)
    try:
        for command in commands:
            result = pipeline.run_stage(command, force=force)
            click.echo(f"{result['stage']}: {result['status']} (count {result['count']})")
            if until is not None and command == until:
                break
    except PipelineError as exc:
        raise click.ClickException(str(exc))


def _make_stage_command(stage: str):
    @_common_options
    def cmd(config, run_dir, seed, force, mock, threshold, proposals, images_dir):
        _run_commands([stage], config, run_dir, seed, force, mock, threshold,
                      proposals, images_dir)

    cmd.__name__ = stage.replace("-", "_")
    return main.command(name=stage)(cmd)


for _stage_name in STAGE_ORDER:
    _make_stage_command(_stage_name)


@main.command(name="run-all")
@_common_options
@click.option("--stage", "until", default=None,
              type=click.Choice(STAGE_ORDER), help="Stop after this stage.")
def run_all(config, run_dir, seed, force, mock, threshold, proposals, images_dir, until):
    """Run every stage in order (resumable; finished stages are skipped)."""
    _run_commands(STAGE_ORDER, config, run_dir, seed, force, mock, threshold,
                  proposals, images_dir, until=until)


@main.command()
@click.option("--run-dir", default="run", help="Run directory.")
@click.option("--json", "as_json", is_flag=True, help="Emit the report as JSON.")
def report(run_dir, as_json):
    """Print stage counts, drop counters, and summary analytics."""
    cfg = RunConfig(run_dir=run_dir)
    pipeline = Pipeline(cfg)
    data = pipeline.report()
    if as_json:
        click.echo(json.dumps(data, indent=2, sort_keys=True))
    else:
        click.echo(format_report(data))


@main.command(name="serve-annotation")
@click.option("--run-dir", default="run", help="Run directory.")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8080)
@click.option("--create-tasks/--no-create-tasks", default=True,
              help="Create rating tasks for the dedup candidates before serving.")
def serve_annotation(run_dir, host, port, create_tasks):
    """Serve rating and pairwise tasks to annotators over HTTP."""
    import uvicorn

    from .annotation import AnnotationService, create_app
    from .records import QarInstance

    cfg = RunConfig(run_dir=run_dir)
    pipeline = Pipeline(cfg)
    service = AnnotationService(pipeline.store)
    if create_tasks and pipeline.store.has_stage("rep_candidates"):
        candidates = {
            iid
            for record in pipeline.store.iterate_stage("rep_candidates")
            for iid in record["instance_ids"]
        }
        qars = [
            q for q in pipeline.store.read_stage("qars", record_type=QarInstance)
            if q.instance_id in candidates
        ]
        images = {i.image_id: i for i in pipeline._images()}
        renders = pipeline._annotation_renders(qars, images)
        task_ids = service.create_rating_tasks(qars, renders)
        click.echo(f"rating tasks ready: {len(task_ids)}")
    app = create_app(service, renders_dir=pipeline.store.run_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
