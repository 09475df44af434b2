"""
Subcommands of the speechreg executable
"""
from .augment import augment_command
from .decode import decode_command
from .eval import eval_command
from .featurize import featurize_command
from .lm_train import lm_train_command
from .toy_corpus import toy_corpus_command
from .train import train_command

__all__ = [
    "augment_command",
    "decode_command",
    "eval_command",
    "featurize_command",
    "lm_train_command",
    "toy_corpus_command",
    "train_command",
]
