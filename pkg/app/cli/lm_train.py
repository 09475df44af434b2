"""
lm-train: character n-gram language model in ARPA format
"""
from pathlib import Path
from typing import Iterator, Optional

import click
import structlog

from app.cli.options import existing_file, load_alphabet, log_level_option, output_path
from app.services.lm_service import train_ngram, write_arpa
from app.services.manifest_service import parse_manifest

logger = structlog.get_logger(__name__)


def corpus_lines(corpus: Optional[Path], manifest: Optional[Path]) -> Iterator[str]:
    if corpus is not None:
        with corpus.open(encoding="utf-8") as handle:
            yield from handle
    if manifest is not None:
        for entry in parse_manifest(manifest):
            yield entry.transcript


@click.command("lm-train")
@click.option("--corpus", type=existing_file, default=None, help="Text file, one sentence per line.")
@click.option("--manifest", "manifest_path", type=existing_file, default=None,
              help="Manifest whose transcripts form the corpus.")
@click.option("--order", type=click.IntRange(min=1), default=3, show_default=True, help="n-gram order.")
@click.option("--alphabet", "alphabet_path", type=existing_file, default=None,
              help="Symbols to include in the vocabulary even if unseen.")
@click.option("--out", "out_path", type=output_path, required=True, help="Output ARPA file.")
@log_level_option
def lm_train_command(
    corpus: Optional[Path],
    manifest_path: Optional[Path],
    order: int,
    alphabet_path: Optional[Path],
    out_path: Path,
):
    """Train a Witten-Bell smoothed character n-gram model."""
    if corpus is None and manifest_path is None:
        raise click.UsageError("one of --corpus or --manifest is required")
    vocabulary = load_alphabet(alphabet_path).symbols if alphabet_path is not None else None
    model = train_ngram(corpus_lines(corpus, manifest_path), order, vocabulary=vocabulary)
    write_arpa(model, out_path)
    logger.info("lm_written", path=str(out_path), order=order, counts=model.counts())
