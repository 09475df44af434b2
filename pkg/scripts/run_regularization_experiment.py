#!/usr/bin/env python3
"""
Baseline vs fully regularized training on the synthetic tone corpus
Generates the corpus when --corpus-dir has no manifests yet, then prints the
comparison report as JSON
"""
import sys
from pathlib import Path

import click
import orjson

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from app.cli.options import load_alphabet  # noqa: E402
from app.cli.train import resolve_model_config  # noqa: E402
from app.config import settings  # noqa: E402
from app.services.corpus_service import generate_toy_corpus  # noqa: E402
from app.services.manifest_service import parse_manifest  # noqa: E402
from app.services.trainer_service import run_regularization_experiment  # noqa: E402


@click.command()
@click.option("--corpus-dir", type=click.Path(path_type=Path), default=Path("toy_corpus"), show_default=True)
@click.option("--train", "num_train", type=int, default=500, show_default=True)
@click.option("--val", "num_val", type=int, default=100, show_default=True)
@click.option("--alphabet-size", type=int, default=5, show_default=True)
@click.option("--seeds", type=int, multiple=True, default=(0, 1, 2), show_default=True)
@click.option("--max-epochs", type=int, default=30, show_default=True)
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--threads", type=int, default=None)
@click.option("--progress/--no-progress", default=True)
def main(corpus_dir, num_train, num_val, alphabet_size, seeds, max_epochs, batch_size, threads, progress):
    train_manifest = corpus_dir / "train.jsonl"
    val_manifest = corpus_dir / "val.jsonl"
    if not train_manifest.exists() or not val_manifest.exists():
        click.echo(f"Writing toy corpus to {corpus_dir} ...", err=True)
        generate_toy_corpus(corpus_dir, num_train, num_val, alphabet_size, show_progress=progress)

    alphabet = load_alphabet(corpus_dir / "alphabet.txt")
    report = run_regularization_experiment(
        parse_manifest(train_manifest, alphabet),
        parse_manifest(val_manifest, alphabet),
        train_manifest,
        val_manifest,
        alphabet,
        resolve_model_config(None, len(alphabet.symbols)),
        seeds=seeds,
        overrides={"max_epochs": max_epochs, "batch_size": batch_size},
        threads=threads or settings.threads,
        show_progress=progress,
    )

    click.echo(orjson.dumps(report.model_dump(mode="json"), option=orjson.OPT_INDENT_2).decode("utf-8"))
    click.echo(
        f"gap narrowed on {report.gap_narrowed}/{len(report.seeds)} seeds, "
        f"validation CER lower on {report.cer_lower}/{len(report.seeds)} seeds, "
        f"both on {report.both_improved}/{len(report.seeds)} seeds",
        err=True,
    )
    sys.exit(0 if report.claim_holds else 1)


if __name__ == "__main__":
    main()
