"""
CTC prefix beam search with shallow n-gram fusion

Scores are natural-log. Each emitted character adds
``lm_weight * ln P_lm(char | history) + insertion_bonus`` to the acoustic
log-probability of its prefix; LM log10 scores are converted to natural log.

A search at width W runs the doubling ladder 1, 2, 4, ... up to the first
power of two >= W and keeps every prefix at its best score over the ladder.
The ladder for a smaller width is a prefix of the ladder for a larger one,
so the top-1 score never decreases as the width grows.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from app.config import settings
from app.exceptions import ConfigurationError
from app.schemas.ctc import BLANK_INDEX, LabelSequence
from app.schemas.decoding import BeamHypothesis, DecodeConfig, DecodeResult
from app.services.lm_service import SENTENCE_START

logger = structlog.get_logger(__name__)

NEG_INF = -math.inf
LN_10 = math.log(10.0)


def _logadd(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


class _Fusion:
    """Per-prefix LM bookkeeping, cached for one decode call"""

    def __init__(self, config: DecodeConfig):
        self.config = config
        self.model = config.model if config.lm_weight > 0 else None
        if self.model is not None and config.symbols is None:
            raise ConfigurationError("DecodeConfig.symbols is required when a language model is attached")
        self.history = max(self.model.order - 1, 0) if self.model is not None else 0
        self.cache: Dict[LabelSequence, Tuple[float, Tuple[str, ...]]] = {(): (0.0, (SENTENCE_START,))}

    def extend(self, prefix: LabelSequence, label: int) -> Tuple[float, Tuple[str, ...]]:
        """(fused LM score, LM state) of prefix + label"""
        new_prefix = prefix + (label,)
        cached = self.cache.get(new_prefix)
        if cached is not None:
            return cached
        score, state = self.cache[prefix]
        if self.model is not None:
            symbol = self.config.symbols[label - 1]
            score += self.config.lm_weight * self.model.score(state, symbol) * LN_10
            state = (state + (symbol,))[-self.history:] if self.history else ()
        score += self.config.insertion_bonus
        self.cache[new_prefix] = (score, state)
        return score, state


def width_ladder(beam_width: int) -> List[int]:
    """Widths searched for ``beam_width``: 1, 2, 4, ... up to the first power of two >= beam_width"""
    if beam_width < 1:
        raise ConfigurationError(f"beam_width must be >= 1, got {beam_width}")
    widths = [1]
    while widths[-1] < beam_width:
        widths.append(widths[-1] * 2)
    return widths


def _search(lattice: np.ndarray, width: int, fusion: _Fusion) -> List[BeamHypothesis]:
    T, C = lattice.shape

    beams: Dict[LabelSequence, Tuple[float, float]] = {(): (0.0, NEG_INF)}
    for t in range(T):
        row = lattice[t].tolist()
        blank_logp = row[BLANK_INDEX]
        candidates: Dict[LabelSequence, List[float]] = {}

        for prefix, (p_blank, p_nonblank) in beams.items():
            p_total = _logadd(p_blank, p_nonblank)

            entry = candidates.setdefault(prefix, [NEG_INF, NEG_INF])
            entry[0] = _logadd(entry[0], p_total + blank_logp)
            last = prefix[-1] if prefix else None
            if last is not None:
                entry[1] = _logadd(entry[1], p_nonblank + row[last])

            for label in range(1, C):
                new_prefix = prefix + (label,)
                fusion.extend(prefix, label)
                new_entry = candidates.setdefault(new_prefix, [NEG_INF, NEG_INF])
                if label == last:
                    new_entry[1] = _logadd(new_entry[1], p_blank + row[label])
                else:
                    new_entry[1] = _logadd(new_entry[1], p_total + row[label])

        ranked = sorted(
            candidates.items(),
            key=lambda item: (-_combined(item[0], item[1], fusion), item[0]),
        )
        beams = {prefix: (pb, pnb) for prefix, (pb, pnb) in ranked[:width]}

    final = []
    for prefix, (p_blank, p_nonblank) in beams.items():
        lm_score, lm_state = fusion.cache[prefix]
        final.append(BeamHypothesis(
            prefix=prefix,
            logp_blank=p_blank,
            logp_nonblank=p_nonblank,
            lm_state=lm_state,
            lm_score=lm_score,
        ))
    return final


def _combined(prefix: LabelSequence, probs: Sequence[float], fusion: _Fusion) -> float:
    return _logadd(probs[0], probs[1]) + fusion.cache[prefix][0]


def hypotheses(lattice: np.ndarray, config: DecodeConfig) -> List[BeamHypothesis]:
    """
    Final beam with the blank/non-blank split and LM state of every prefix

    Prefixes found anywhere on the width ladder are merged, each kept at its
    best combined score; the list is ranked by score, ties broken on prefix
    order, and cut to ``beam_width`` entries.
    """
    lattice = np.asarray(lattice, dtype=np.float64)
    fusion = _Fusion(config)
    best: Dict[LabelSequence, BeamHypothesis] = {}
    for width in width_ladder(config.beam_width):
        for h in _search(lattice, width, fusion):
            kept = best.get(h.prefix)
            if kept is None or h.score > kept.score:
                best[h.prefix] = h
    ranked = sorted(best.values(), key=lambda h: (-h.score, h.prefix))
    return ranked[:config.beam_width]


def beam_search(lattice: np.ndarray, config: DecodeConfig) -> List[DecodeResult]:
    """
    Prefix beam search over a T x C log-probability lattice

    Returns the n-best list ranked by combined score (acoustic + fused LM +
    insertion bonus); ties break on lexicographic prefix order.
    """
    return [
        DecodeResult(
            labels=h.prefix,
            score=h.score,
            acoustic_logp=h.acoustic_logp,
            lm_score=h.lm_score,
        )
        for h in hypotheses(lattice, config)
    ]


def decode_batch(
    lattices: Sequence[np.ndarray],
    config: DecodeConfig,
    threads: Optional[int] = None,
) -> List[List[DecodeResult]]:
    """Decode utterances concurrently; output order follows input order"""
    threads = threads or settings.threads
    logger.debug("decode_batch", utterances=len(lattices), threads=threads, beam_width=config.beam_width)
    if threads <= 1 or len(lattices) <= 1:
        return [beam_search(lattice, config) for lattice in lattices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda lattice: beam_search(lattice, config), lattices))
