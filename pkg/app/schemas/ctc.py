"""
CTC alphabet and result types
"""
import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

from app.exceptions import ConfigurationError

LabelSequence = Tuple[int, ...]

BLANK_INDEX = 0


@dataclass(frozen=True)
class Alphabet:
    """
    Output symbols; index 0 of the output layer is the CTC blank, so symbol
    ``symbols[i]`` has label id ``i + 1``
    """
    symbols: Tuple[str, ...]

    def __post_init__(self):
        symbols = tuple(self.symbols)
        if len(set(symbols)) != len(symbols):
            raise ConfigurationError("alphabet symbols must be distinct")
        if not symbols:
            raise ConfigurationError("alphabet must not be empty")
        object.__setattr__(self, "symbols", symbols)

    @property
    def blank_index(self) -> int:
        return BLANK_INDEX

    @property
    def size(self) -> int:
        """Number of output classes including blank"""
        return len(self.symbols) + 1

    def encode(self, text: str) -> LabelSequence:
        index = {s: i + 1 for i, s in enumerate(self.symbols)}
        try:
            return tuple(index[ch] for ch in text)
        except KeyError as e:
            raise ConfigurationError(f"character {e.args[0]!r} is not in the alphabet") from None

    def decode(self, ids: Iterable[int]) -> str:
        return "".join(self.symbols[i - 1] for i in ids)

    def unknown_characters(self, text: str) -> List[str]:
        known = set(self.symbols)
        return [ch for ch in text if ch not in known]

    @classmethod
    def from_text(cls, text: str) -> "Alphabet":
        """Alphabet serialized one symbol per line"""
        return cls(tuple(line for line in text.split("\n") if line != ""))

    def to_text(self) -> str:
        return "\n".join(self.symbols) + "\n"


@dataclass(frozen=True)
class CTCResult:
    """Negative log-likelihood plus feasibility flag"""
    loss: float
    feasible: bool

    @classmethod
    def infeasible(cls) -> "CTCResult":
        return cls(loss=math.inf, feasible=False)


def validate_labels(labels: Sequence[int], num_classes: int) -> LabelSequence:
    """Check label ids are in 1..num_classes-1"""
    labels = tuple(int(label) for label in labels)
    for label in labels:
        if label == BLANK_INDEX or not 0 < label < num_classes:
            raise ConfigurationError(f"invalid label id {label} for {num_classes} classes")
    return labels
