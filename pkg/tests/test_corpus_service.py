"""
Tests for the synthetic tone corpus
"""
import pytest

from app.exceptions import ConfigurationError
from app.services.audio_service import read_wav
from app.services.corpus_service import (
    GAP_MS,
    TONE_MS,
    generate_toy_corpus,
    synthesize,
    tone_frequency,
    toy_alphabet,
)
from app.services.manifest_service import parse_manifest, resolve_audio_path


class TestSynthesize:
    """Test tone rendering"""

    def test_duration(self, small_alphabet):
        """Three characters take 3 tones plus 4 gaps"""
        buffer = synthesize("abc", small_alphabet, 16000)

        assert buffer.duration == pytest.approx((3 * TONE_MS + 4 * GAP_MS) / 1000.0)

    def test_tone_pitch(self, small_alphabet, dominant_frequency):
        """A single character is a tone at its assigned frequency"""
        buffer = synthesize("c", small_alphabet, 16000)

        assert abs(dominant_frequency(buffer) - tone_frequency(2)) < 0.01 * tone_frequency(2)

    def test_alphabet_limits(self):
        with pytest.raises(ConfigurationError):
            toy_alphabet(0)
        with pytest.raises(ConfigurationError):
            toy_alphabet(9)


class TestGenerateToyCorpus:
    """Test the written corpus"""

    def test_layout(self, toy_corpus):
        """Manifests, WAVs and alphabet agree"""
        assert len(toy_corpus.train) == 6
        assert len(toy_corpus.val) == 3
        assert toy_corpus.alphabet_path.read_text().split() == ["a", "b", "c"]
        entries = parse_manifest(toy_corpus.train_manifest, toy_corpus.alphabet)
        for entry in entries:
            buffer = read_wav(resolve_audio_path(entry, toy_corpus.train_manifest))
            assert buffer.duration == pytest.approx(entry.duration_s)
            assert 3 <= len(entry.transcript) <= 8

    def test_validation_strings_unseen(self, toy_corpus):
        train_text = {e.transcript for e in toy_corpus.train}

        assert not any(e.transcript in train_text for e in toy_corpus.val)

    def test_seeded(self, tmp_path, toy_corpus):
        """The same seed writes the same transcripts"""
        again = generate_toy_corpus(tmp_path, num_train=6, num_val=3, alphabet_size=3, seed=0)

        assert [e.transcript for e in again.train] == [e.transcript for e in toy_corpus.train]
        assert [e.transcript for e in again.val] == [e.transcript for e in toy_corpus.val]
