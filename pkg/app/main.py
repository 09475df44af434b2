"""
Command-line entry point for the speech regularization toolkit
"""
import logging
import sys
from typing import List, Optional

import click
import structlog
from pydantic import ValidationError

from app.config import settings
from app.exceptions import ConfigurationError, DataError, SpeechRegError
from app.cli import (
    augment_command,
    decode_command,
    eval_command,
    featurize_command,
    lm_train_command,
    toy_corpus_command,
    train_command,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


def configure_logging(level: Optional[str] = None, fmt: Optional[str] = None) -> None:
    """structlog over stdlib logging, written to stderr so stdout stays machine-readable"""
    level = (level or settings.log_level).upper()
    fmt = fmt or settings.log_format
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root.addHandler(handler)
    root.setLevel(getattr(logging, level, logging.INFO))

    renderer = structlog.dev.ConsoleRenderer() if fmt == "console" else structlog.processors.JSONRenderer()
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=False,
    )


configure_logging()
logger = structlog.get_logger()


@click.group(name=settings.app_name, context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(settings.app_version, prog_name=settings.app_name)
def cli():
    """Data augmentation, dropout and CTC training for end-to-end speech recognition"""


cli.add_command(augment_command)
cli.add_command(featurize_command)
cli.add_command(lm_train_command)
cli.add_command(train_command)
cli.add_command(decode_command)
cli.add_command(eval_command)
cli.add_command(toy_corpus_command)


def run(argv: Optional[List[str]] = None) -> int:
    """
    Dispatch a command line; returns 0 on success, 1 on usage or
    configuration errors, 2 on data errors
    """
    try:
        result = cli.main(args=argv, prog_name=settings.app_name, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except (ConfigurationError, ValidationError) as e:
        logger.error("configuration_error", error=str(e))
        click.echo(f"error: {e}", err=True)
        return EXIT_USAGE
    except (DataError, OSError) as e:
        logger.error("data_error", error=str(e))
        click.echo(f"error: {e}", err=True)
        return EXIT_DATA
    except SpeechRegError as e:
        logger.error("command_failed", error=str(e), error_type=type(e).__name__)
        click.echo(f"error: {e}", err=True)
        return EXIT_USAGE
    return result if isinstance(result, int) else EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
