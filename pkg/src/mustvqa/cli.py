"""Command-line entry point: ``mustvqa <command>``."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import click

from .corpus.manifest import load_manifest, save_manifest
from .corpus.split import SplitSpec, build_split
from .corpus.synth import synthesize_toy_dataset
from .corpus.translate import TranslationCache, translate_questions
from .harness.backends import BACKENDS, make_backend
from .harness.config import PRESETS, ExperimentConfig
from .harness.protocols import emit_report, evaluate, load_reports, robustness_sweep
from .harness.train import train
from .metrics import EvalReport, render_table


def _langs(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()] if value else []


def _reports(dicts) -> list[EvalReport]:
    return [EvalReport.from_dict(d) for d in dicts]


def _cache(path):
    return TranslationCache(path) if path else TranslationCache.default()


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Multilingual scene-text VQA: data, training and evaluation."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--out", required=True, type=click.Path(), help="Manifest path to write.")
@click.option("--seed", default=7, show_default=True)
@click.option("--n-images", default=8, show_default=True)
@click.option("--n-langs", default=4, show_default=True)
@click.option("--questions-per-image", default=4, show_default=True)
def synth(out, seed, n_images, n_langs, questions_per_image):
    """Write a deterministic toy dataset."""
    m = synthesize_toy_dataset(seed, n_images, n_langs, questions_per_image)
    save_manifest(m, out)
    click.echo(f"{out}: {len(m.images)} images, {len(m.questions)} questions, "
               f"languages {','.join(m.languages)}")


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--backend", required=True, type=click.Choice(BACKENDS))
@click.option("--targets", required=True, help="Comma-separated language tags.")
@click.option("--out", required=True, type=click.Path())
@click.option("--endpoint", default=None, help="URL for the http backend.")
@click.option("--cache", default=None, type=click.Path(), help="Translation cache file.")
@click.option("--workers", default=1, show_default=True)
@click.option("--replace", is_flag=True, help="Overwrite existing records of this backend.")
def translate(manifest, backend, targets, out, endpoint, cache, workers, replace):
    """Add machine-translated questions to a manifest."""
    m = load_manifest(manifest)
    result = translate_questions(m, _langs(targets), make_backend(backend, endpoint),
                                 cache=_cache(cache), max_workers=workers, replace_existing=replace)
    save_manifest(result.manifest, out)
    for src, tgt in result.skipped:
        click.echo(f"skipped {src}->{tgt}: not supported by {backend}")
    click.echo(f"{out}: {len(result.manifest.questions)} questions "
               f"({result.backend_calls} backend calls)")


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--train", "train_langs", required=True, help="Comma-separated train languages.")
@click.option("--zeroshot", default="", help="Comma-separated zero-shot languages.")
@click.option("--val-fraction", default=0.2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def split(manifest, train_langs, zeroshot, val_fraction, seed, out):
    """Build a train/val split grouped by source question."""
    m = load_manifest(manifest)
    spec = build_split(m, _langs(train_langs), _langs(zeroshot), val_fraction, seed)
    spec.save(out)
    click.echo(f"{out}: {len(spec.train_sources)} train / {len(spec.val_sources)} val sources")


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(), help="Run directory.")
@click.option("--max-iter", default=None, type=int, help="Override the configured iterations.")
def train_cmd(config_path, out, max_iter):
    """Train a model from a YAML config."""
    config = ExperimentConfig.from_yaml(config_path)
    if max_iter is not None:
        config = config.with_overrides(max_iter=max_iter)
    record = train(config, out)
    click.echo(f"config {record.config_hash[:12]} -> {record.checkpoint} ({record.seconds:.1f}s)")
    for r in _reports(record.reports):
        click.echo(render_table([r]))


@main.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--split", "split_path", required=True, type=click.Path(exists=True))
@click.option("--protocol", default="iid", type=click.Choice(["iid", "zeroshot"]))
@click.option("--partition", default="val", type=click.Choice(["train", "val"]))
@click.option("--vocab", default=None, type=click.Path(exists=True))
@click.option("--name", default="")
@click.option("--out", default=None, type=click.Path(), help="Report prefix (.json, .txt).")
def eval_cmd(checkpoint, manifest, split_path, protocol, partition, vocab, name, out):
    """Score a frozen checkpoint under the IID or zero-shot protocol."""
    report = evaluate(checkpoint, load_manifest(manifest), SplitSpec.load(split_path), protocol,
                      partition, vocab=vocab, name=name)
    if out:
        emit_report([report], out)
    click.echo(render_table([report]))


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--split", "split_path", required=True, type=click.Path(exists=True))
@click.option("--backends", required=True, help=f"Comma-separated, from {', '.join(BACKENDS)}.")
@click.option("--endpoint", default=None, help="URL for the http backend.")
@click.option("--cache", default=None, type=click.Path())
@click.option("--out", default=None, type=click.Path())
def sweep(checkpoint, manifest, split_path, backends, endpoint, cache, out):
    """Re-translate the questions with each backend and re-evaluate."""
    clients = [make_backend(b, endpoint) for b in _langs(backends)]
    reports = robustness_sweep(checkpoint, load_manifest(manifest), SplitSpec.load(split_path),
                               clients, cache=_cache(cache))
    if out:
        emit_report(reports, out, title="translation robustness")
    click.echo(render_table(reports))


@main.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--metric", default="accuracy", type=click.Choice(["accuracy", "anls"]))
@click.option("--out", default=None, type=click.Path())
@click.option("--title", default="")
def report(inputs, metric, out, title):
    """Merge report JSON files (or run.json records) into one table."""
    reports = []
    for path in inputs:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        reports.extend(_reports(data["reports"]) if isinstance(data, dict) and "reports" in data
                       else load_reports(path))
    if out:
        emit_report(reports, out, title=title)
    click.echo(render_table(reports, metric, title))


@main.command()
def presets():
    """List the named experiment presets."""
    for name, values in PRESETS.items():
        click.echo(f"{name}: {values['family']}/{values['flavor']} {values['max_iter']} iters, "
                   f"batch {values['batch_size']}, {values['schedule']['kind']}")


if __name__ == "__main__":
    main()
