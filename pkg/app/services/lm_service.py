"""
Character-level n-gram language model with backoff

Models are trained with interpolated Witten-Bell smoothing and stored in
the ARPA format (log10 probabilities and backoff weights), so externally
trained models can be loaded for decoding as well.
"""
import math
import re
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import structlog

from app.config import settings
from app.exceptions import ArpaParseError, ConfigurationError
from app.services.storage import atomic_write_text

logger = structlog.get_logger(__name__)

SENTENCE_START = "<s>"
SENTENCE_END = "</s>"
SPACE_TOKEN = "<space>"
# log10 probability ARPA tools assign to <s>, which is never predicted
START_LOG10 = -99.0

NGram = Tuple[str, ...]

_NGRAM_HEADER = re.compile(r"^ngram\s+(\d+)\s*=\s*(\d+)$")
_SECTION_HEADER = re.compile(r"^\\(\d+)-grams:$")


class NGramModel:
    """
    Immutable backoff n-gram model

    ``probs`` maps an n-gram (context + symbol) to its log10 probability,
    ``backoffs`` maps a context to its log10 backoff weight. Lookups are
    read-only, so one instance can be shared by many decoder threads.
    """

    def __init__(
        self,
        order: int,
        probs: Dict[NGram, float],
        backoffs: Optional[Dict[NGram, float]] = None,
        oov_log10: Optional[float] = None,
    ):
        if order < 1:
            raise ConfigurationError(f"n-gram order must be at least 1, got {order}")
        self.order = order
        self.probs = dict(probs)
        self.backoffs = dict(backoffs or {})
        self.oov_log10 = settings.lm_oov_log10 if oov_log10 is None else oov_log10
        self.vocabulary: Set[str] = {ngram[0] for ngram in self.probs if len(ngram) == 1}

    def __repr__(self):
        return f"<NGramModel(order={self.order}, ngrams={len(self.probs)}, vocabulary={len(self.vocabulary)})>"

    def counts(self) -> Dict[int, int]:
        """Number of stored n-grams per order"""
        totals = {n: 0 for n in range(1, self.order + 1)}
        for ngram in self.probs:
            totals[len(ngram)] += 1
        return totals

    def predictable_symbols(self) -> List[str]:
        """Vocabulary minus the sentence-start marker"""
        return sorted(s for s in self.vocabulary if s != SENTENCE_START)

    def score(self, context: Sequence[str], symbol: str) -> float:
        """
        log10 P(symbol | context) with standard backoff

        Only the last order-1 context symbols are used; out-of-vocabulary
        symbols score the configured floor.
        """
        if symbol not in self.vocabulary:
            return self.oov_log10
        context = tuple(context)[-(self.order - 1):] if self.order > 1 else ()
        penalty = 0.0
        while True:
            logp = self.probs.get(context + (symbol,))
            if logp is not None:
                return penalty + logp
            if not context:
                return self.oov_log10
            penalty += self.backoffs.get(context, 0.0)
            context = context[1:]

    def sentence_score(self, symbols: Sequence[str]) -> float:
        """log10 probability of a whole symbol sequence including </s>"""
        history = [SENTENCE_START]
        total = 0.0
        for symbol in list(symbols) + [SENTENCE_END]:
            total += self.score(history, symbol)
            history.append(symbol)
        return total

    def without(self, ngram: NGram) -> "NGramModel":
        """Copy with one n-gram removed"""
        probs = dict(self.probs)
        probs.pop(tuple(ngram), None)
        return NGramModel(self.order, probs, self.backoffs, self.oov_log10)


def train_ngram(
    corpus: Iterable[str],
    order: int,
    vocabulary: Optional[Iterable[str]] = None,
    oov_log10: Optional[float] = None,
) -> NGramModel:
    """
    Train a character n-gram model with interpolated Witten-Bell smoothing

    For a context h with N(h) tokens and T(h) distinct followers:
        P(w|h) = (c(h, w) + T(h) * P(w|h')) / (N(h) + T(h))
        bow(h) = T(h) / (N(h) + T(h))
    with h' the context minus its oldest symbol, bottoming out at a uniform
    distribution over the vocabulary.
    """
    if order < 1:
        raise ConfigurationError(f"n-gram order must be at least 1, got {order}")

    counts: Dict[NGram, int] = defaultdict(int)
    sentences = 0
    for line in corpus:
        line = line.rstrip("\n")
        if not line:
            continue
        sentences += 1
        tokens = [SENTENCE_START] + list(line) + [SENTENCE_END]
        for i in range(1, len(tokens)):
            for n in range(1, order + 1):
                if i - n + 1 < 0:
                    break
                counts[tuple(tokens[i - n + 1:i + 1])] += 1
    if sentences == 0:
        raise ConfigurationError("cannot train a language model on an empty corpus")

    symbols = {ngram[0] for ngram in counts if len(ngram) == 1}
    if vocabulary is not None:
        symbols |= set(vocabulary)
    symbols.discard(SENTENCE_START)
    symbols.add(SENTENCE_END)

    # per-context totals N(h) and distinct follower counts T(h)
    context_tokens: Dict[NGram, int] = defaultdict(int)
    context_types: Dict[NGram, int] = defaultdict(int)
    for ngram, c in counts.items():
        context_tokens[ngram[:-1]] += c
        context_types[ngram[:-1]] += 1

    probs: Dict[NGram, float] = {}
    linear: Dict[NGram, float] = {}

    uniform = 1.0 / len(symbols)
    n0, t0 = context_tokens[()], context_types[()]
    for symbol in sorted(symbols):
        p = (counts.get((symbol,), 0) + t0 * uniform) / (n0 + t0)
        linear[(symbol,)] = p
        probs[(symbol,)] = math.log10(p)
    probs[(SENTENCE_START,)] = START_LOG10

    for n in range(2, order + 1):
        for ngram in sorted(g for g in counts if len(g) == n):
            context = ngram[:-1]
            tokens, types = context_tokens[context], context_types[context]
            p_lower = _backoff_probability(linear, context_tokens, context_types, ngram[1:])
            p = (counts[ngram] + types * p_lower) / (tokens + types)
            linear[ngram] = p
            probs[ngram] = math.log10(p)

    backoffs: Dict[NGram, float] = {}
    for context, types in context_types.items():
        if not context or len(context) >= order:
            continue
        tokens = context_tokens[context]
        backoffs[context] = math.log10(types / (tokens + types))

    model = NGramModel(order, probs, backoffs, oov_log10)
    logger.info("ngram_trained", order=order, sentences=sentences, counts=model.counts())
    return model


def _backoff_probability(
    linear: Dict[NGram, float],
    context_tokens: Dict[NGram, int],
    context_types: Dict[NGram, int],
    ngram: NGram,
) -> float:
    """Smoothed probability of ngram[-1] given ngram[:-1] from the lower-order tables"""
    if ngram in linear:
        return linear[ngram]
    if len(ngram) == 1:
        return 0.0
    context = ngram[:-1]
    tokens, types = context_tokens.get(context, 0), context_types.get(context, 0)
    weight = types / (tokens + types) if tokens + types else 1.0
    return weight * _backoff_probability(linear, context_tokens, context_types, ngram[1:])


def _to_token(symbol: str) -> str:
    return SPACE_TOKEN if symbol == " " else symbol


def _from_token(token: str) -> str:
    return " " if token == SPACE_TOKEN else token


def to_arpa(model: NGramModel) -> str:
    """Serialize in ARPA format with full-precision log10 values"""
    by_order: Dict[int, List[NGram]] = defaultdict(list)
    for ngram in model.probs:
        by_order[len(ngram)].append(ngram)

    lines = ["", "\\data\\"]
    for n in range(1, model.order + 1):
        lines.append(f"ngram {n}={len(by_order[n])}")
    for n in range(1, model.order + 1):
        lines.append("")
        lines.append(f"\\{n}-grams:")
        for ngram in sorted(by_order[n]):
            fields = [repr(model.probs[ngram]), " ".join(_to_token(s) for s in ngram)]
            if ngram in model.backoffs:
                fields.append(repr(model.backoffs[ngram]))
            lines.append("\t".join(fields))
    lines.append("")
    lines.append("\\end\\")
    return "\n".join(lines) + "\n"


def write_arpa(model: NGramModel, path: Union[str, Path]) -> None:
    atomic_write_text(path, to_arpa(model))


def parse_arpa_text(text: str, oov_log10: Optional[float] = None) -> NGramModel:
    """
    Parse ARPA text

    Declared counts are checked against the entries found when ``\\end\\``
    is reached; a missing backoff weight means 0.0.
    """
    declared: Dict[int, int] = {}
    found: Dict[int, int] = defaultdict(int)
    probs: Dict[NGram, float] = {}
    backoffs: Dict[NGram, float] = {}
    state = "preamble"
    section = 0
    line_number = 0

    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue

        if state == "preamble":
            if line == "\\data\\":
                state = "data"
            continue

        if line == "\\end\\":
            if not declared:
                raise ArpaParseError("no ngram counts declared", line_number)
            for n, count in sorted(declared.items()):
                if found[n] != count:
                    raise ArpaParseError(
                        f"{n}-grams: declared {count} entries, found {found[n]}", line_number
                    )
            order = max(declared)
            return NGramModel(order, probs, backoffs, oov_log10)

        header = _SECTION_HEADER.match(line)
        if header:
            section = int(header.group(1))
            if section not in declared:
                raise ArpaParseError(f"section for undeclared order {section}", line_number)
            state = "ngrams"
            continue

        if state == "data":
            match = _NGRAM_HEADER.match(line)
            if not match:
                raise ArpaParseError(f"malformed count line {line!r}", line_number)
            declared[int(match.group(1))] = int(match.group(2))
            continue

        fields = line.split()
        if len(fields) not in (section + 1, section + 2):
            raise ArpaParseError(
                f"expected {section} tokens with log10 probability and optional backoff, got {line!r}",
                line_number,
            )
        try:
            logp = float(fields[0])
            bow = float(fields[section + 1]) if len(fields) == section + 2 else None
        except ValueError:
            raise ArpaParseError(f"non-numeric probability or backoff in {line!r}", line_number) from None
        ngram = tuple(_from_token(token) for token in fields[1:section + 1])
        probs[ngram] = logp
        if bow is not None:
            backoffs[ngram] = bow
        found[section] += 1

    raise ArpaParseError("missing \\end\\ terminator", line_number)


def parse_arpa(path: Union[str, Path], oov_log10: Optional[float] = None) -> NGramModel:
    """Load an ARPA file"""
    model = parse_arpa_text(Path(path).read_text(encoding="utf-8"), oov_log10)
    logger.info("arpa_loaded", path=str(path), order=model.order, counts=model.counts())
    return model
