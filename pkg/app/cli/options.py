"""
Options and helpers shared by every subcommand
"""
from pathlib import Path
from typing import Optional

import click
import orjson

from app.config import settings
from app.exceptions import ConfigurationError
from app.schemas.ctc import Alphabet
from app.services.storage import atomic_write_bytes

LOG_LEVELS = click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False)


def _apply_log_level(ctx: click.Context, param: click.Parameter, value: Optional[str]) -> Optional[str]:
    if value:
        from app.main import configure_logging

        configure_logging(level=value)
    return value


log_level_option = click.option(
    "--log-level", type=LOG_LEVELS, default=None, expose_value=False, is_eager=True,
    callback=_apply_log_level, help="Log level for this run (default: SPEECHREG_LOG_LEVEL).",
)

seed_option = click.option(
    "--seed", type=click.IntRange(min=0), default=lambda: settings.default_seed,
    help="Seed for every random stream of the command (default: SPEECHREG_DEFAULT_SEED).",
)

threads_option = click.option(
    "--threads", type=click.IntRange(min=1), default=None,
    help="Worker threads (default: SPEECHREG_THREADS).",
)

existing_file = click.Path(exists=True, dir_okay=False, path_type=Path)
existing_dir = click.Path(exists=True, file_okay=False, path_type=Path)
output_path = click.Path(path_type=Path)


def load_alphabet(path: Optional[Path]) -> Alphabet:
    """Alphabet from a one-symbol-per-line file, else the configured default"""
    if path is None:
        return Alphabet(tuple(settings.default_alphabet))
    try:
        return Alphabet.from_text(path.read_text(encoding="utf-8"))
    except ValueError as e:
        raise ConfigurationError(f"{path}: {e}") from None


def read_json(path: Path) -> dict:
    try:
        value = orjson.loads(path.read_bytes())
    except orjson.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(value, dict):
        raise ConfigurationError(f"{path}: expected a JSON object")
    return value


def write_json(path: Path, value) -> None:
    atomic_write_bytes(path, orjson.dumps(value, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS))


def echo_json(value) -> None:
    click.echo(orjson.dumps(value, option=orjson.OPT_SORT_KEYS).decode("utf-8"))
