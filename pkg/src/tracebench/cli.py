"""Command-line entry points for the benchmark."""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .bench.config import load_config
from .bench.report import emit_matrix_report, emit_rankings, export_projection
from .bench.runner import load_embeddings_npz, load_results, run_benchmark
from .core import save_jsonl
from .errors import TraceBenchError
from .ingest import load_dataset
from .synth import load_recipe, synthesize_dataset


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool):
    """Trace representation benchmark."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--workers", type=int, default=None, help="Override worker count.")
@click.option("--resume", is_flag=True, help="Reuse cached stage-1 embeddings.")
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Override output directory.")
def run(config_path: str, workers: int | None, resume: bool, out_dir: str | None):
    """Run the benchmark matrix described by a config file."""
    try:
        cfg = load_config(config_path)
        if workers is not None:
            cfg.workers = workers
        if out_dir is not None:
            cfg.out_dir = out_dir
        store = run_benchmark(cfg, resume=resume)
    except TraceBenchError as exc:
        raise click.ClickException(str(exc))
    failed = sum(1 for r in store.results if r.status != "ok")
    click.echo(
        f"{len(store.results)} result rows ({failed} failed) written to {cfg.out_dir}"
    )
    if failed:
        sys.exit(1)


@main.command()
@click.option("--recipe", required=True, help="Builtin recipe name (ds1..ds4) or YAML path.")
@click.option("--out", "out_path", required=True, type=click.Path())
def synth(recipe: str, out_path: str):
    """Generate a synthetic dataset and write it as JSON lines."""
    try:
        ds = synthesize_dataset(load_recipe(recipe))
        save_jsonl(ds, out_path)
    except TraceBenchError as exc:
        raise click.ClickException(str(exc))
    n, families, outliers = ds.stats
    click.echo(f"{out_path}: {n} traces, {families} families, {outliers} outliers")


@main.command()
@click.option("--results", "results_dir", required=True, type=click.Path(exists=True))
@click.option(
    "--format", "fmt", default="csv",
    type=click.Choice(["csv", "markdown", "heatmap-data"]),
)
def report(results_dir: str, fmt: str):
    """Emit the matrix report and rankings from a finished run."""
    try:
        store = load_results(results_dir)
        matrix = emit_matrix_report(store, results_dir, format=fmt)
        rankings = emit_rankings(store, results_dir)
    except TraceBenchError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {matrix} and {rankings}")


@main.command()
@click.option("--embeddings", "emb_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--dataset", "dataset_path", type=click.Path(exists=True), default=None,
              help="Trace JSONL used to attach family labels.")
def project(emb_path: str, out_path: str | None, dataset_path: str | None):
    """Project cached embeddings to 2-D principal components."""
    try:
        embeddings = load_embeddings_npz(emb_path)
        labels = None
        if dataset_path:
            ds, _report = load_dataset(dataset_path)
            labels = {t.filemd5: t.family for t in ds.traces}
        target = Path(out_path) if out_path else Path(emb_path).with_suffix(".projection.csv")
        written = export_projection(embeddings, target, labels=labels)
    except TraceBenchError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {written}")


if __name__ == "__main__":
    main()
