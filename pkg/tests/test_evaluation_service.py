"""
Tests for error-rate scoring
"""
import itertools

import pytest

from app.exceptions import ConfigurationError
from app.models.checkpoint import Checkpoint
from app.models.speech_model import init_params, init_state
from app.rng import make_rng
from app.schemas.decoding import DecodeConfig
from app.services.evaluation_service import (
    character_error_rate,
    edit_distance,
    evaluate,
    score_transcripts,
    word_error_rate,
)
from app.services.feature_service import compute_stats, normalize_utterance, spectrogram
from app.services.trainer_service import load_buffers


def recursive_distance(a, b) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(
        recursive_distance(a[1:], b) + 1,
        recursive_distance(a, b[1:]) + 1,
        recursive_distance(a[1:], b[1:]) + (a[0] != b[0]),
    )


class TestEditDistance:
    """Test Levenshtein distance"""

    def test_matches_recursive_definition(self):
        """All strings up to length 4 over a two-letter alphabet"""
        words = ["".join(p) for n in range(5) for p in itertools.product("ab", repeat=n)]
        for a in words:
            for b in words[::3]:
                assert edit_distance(a, b) == recursive_distance(a, b), (a, b)

    def test_known_values(self):
        assert edit_distance("kitten", "sitting") == 3
        assert edit_distance("", "abc") == 3
        assert edit_distance("abc", "") == 3

    def test_word_tokens(self):
        assert edit_distance("the cat sat".split(), "the bat sat down".split()) == 2


class TestErrorRates:
    """Test CER and WER"""

    def test_one_substitution(self):
        """'abc' against 'axc' is 1/3"""
        assert character_error_rate("abc", "axc") == pytest.approx(1 / 3)

    def test_can_exceed_one(self):
        assert character_error_rate("a", "bbb") == 3.0

    def test_wer(self):
        assert word_error_rate("a b c d", "a x c") == 0.5

    def test_empty_reference_rejected(self):
        with pytest.raises(ConfigurationError):
            character_error_rate("", "abc")

    def test_corpus_rates_pool_edits(self):
        """Corpus CER is total edits over total reference characters"""
        result = score_transcripts(["abc", "abcdefg"], ["axc", "abcdefg"])

        assert result.cer == pytest.approx(1 / 10)
        assert result.char_edits == 1
        assert result.reference_chars == 10

    def test_empty_reference_skipped(self):
        """Empty references are excluded from the corpus score"""
        result = score_transcripts(["abc", "", "  "], ["abc", "zzz", ""])

        assert result.utterances == 1
        assert result.skipped == 2
        assert result.cer == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ConfigurationError):
            score_transcripts(["a"], [])


class TestEvaluate:
    """Test model evaluation over a manifest"""

    def test_scores_every_utterance(self, toy_corpus, tiny_model_config):
        """An untrained model still yields one hypothesis per utterance"""
        config = tiny_model_config.model_copy(update={"input_bins": 257})
        checkpoint = Checkpoint(
            config=config, params=init_params(config, make_rng(0)), state=init_state(config),
            alphabet=toy_corpus.alphabet.symbols,
        )
        stats = compute_stats(
            normalize_utterance(spectrogram(b)) for b in load_buffers(toy_corpus.train, toy_corpus.train_manifest)
        )

        result = evaluate(checkpoint, toy_corpus.val, toy_corpus.val_manifest,
                          DecodeConfig(beam_width=4, lm_weight=0.0, insertion_bonus=0.0), stats, threads=2)

        assert result.utterances == len(toy_corpus.val)
        assert [h.reference for h in result.hypotheses] == [e.transcript for e in toy_corpus.val]
        assert all(set(h.hypothesis) <= set("abc") for h in result.hypotheses)
        assert result.cer >= 0.0

    def test_needs_alphabet(self, toy_corpus, tiny_model_config):
        checkpoint = Checkpoint(config=tiny_model_config, params={}, state={})

        with pytest.raises(ConfigurationError):
            evaluate(checkpoint, toy_corpus.val, toy_corpus.val_manifest, DecodeConfig())
