"""
toy-corpus: synthetic tone corpus for desk-scale training runs
"""
from pathlib import Path

import click

from app.cli.options import log_level_option, output_path, seed_option
from app.services.corpus_service import MAX_ALPHABET, generate_toy_corpus


@click.command("toy-corpus")
@click.option("--out-dir", type=output_path, required=True, help="Directory for WAVs and manifests.")
@click.option("--train", "num_train", type=click.IntRange(min=0), default=200, show_default=True,
              help="Training utterances.")
@click.option("--val", "num_val", type=click.IntRange(min=0), default=40, show_default=True,
              help="Validation utterances.")
@click.option("--alphabet-size", type=click.IntRange(min=1, max=MAX_ALPHABET), default=5, show_default=True,
              help="Distinct tone symbols.")
@click.option("--progress/--no-progress", default=False, help="Show a progress bar.")
@seed_option
@log_level_option
def toy_corpus_command(out_dir: Path, num_train: int, num_val: int, alphabet_size: int, progress: bool, seed: int):
    """Write tone-sequence WAVs with train.jsonl, val.jsonl and alphabet.txt."""
    generate_toy_corpus(out_dir, num_train, num_val, alphabet_size, seed=seed, show_progress=progress)
