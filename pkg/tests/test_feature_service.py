"""
Tests for spectrogram extraction and normalization
"""
import numpy as np
import pytest

from app.exceptions import FeatureError
from app.schemas.audio import AudioBuffer
from app.schemas.features import FeatureStats, Spectrogram
from app.services.feature_service import (
    LOG_FLOOR,
    compute_stats,
    extract_features,
    frames_for_length,
    load_stats,
    merge_stats,
    normalize_features,
    normalize_utterance,
    save_stats,
    spectrogram,
    stats_from_bytes,
)


def spec_of(data) -> Spectrogram:
    return Spectrogram(data=np.asarray(data, dtype=np.float64), sample_rate=16000)


class TestSpectrogram:
    """Test log-power spectrogram framing"""

    def test_one_second_geometry(self, tone):
        """1 s at 16 kHz gives 99 frames of 257 bins"""
        spec = spectrogram(tone(seconds=1.0))

        assert spec.data.shape == (99, 257)
        assert spec.frame_ms == 20.0
        assert spec.hop_ms == 10.0

    def test_silence_hits_floor(self):
        """An all-zero buffer is log(1e-10) everywhere"""
        spec = spectrogram(AudioBuffer(samples=np.zeros(16000), sample_rate=16000))

        np.testing.assert_allclose(spec.data, np.log(LOG_FLOOR))

    def test_tone_bin(self, tone):
        """A 1 kHz tone peaks in bin 32 of every frame"""
        spec = spectrogram(tone(1000.0, seconds=0.5))

        assert set(np.argmax(spec.data, axis=1).tolist()) == {32}

    @pytest.mark.parametrize("length", [320, 321, 479, 480, 481, 16000, 16159])
    def test_frame_count_law(self, length):
        """frames = floor((len - win) / hop) + 1"""
        buffer = AudioBuffer(samples=np.ones(length), sample_rate=16000)

        assert spectrogram(buffer).num_frames == (length - 320) // 160 + 1 == frames_for_length(length, 16000)

    def test_too_short(self):
        """Shorter than one window fails naming the minimum"""
        with pytest.raises(FeatureError) as exc:
            spectrogram(AudioBuffer(samples=np.ones(100), sample_rate=16000))

        assert "320" in str(exc.value)


class TestNormalizeUtterance:
    """Test per-utterance normalization"""

    def test_zero_mean_unit_variance(self, rng):
        """Output has mean 0 and variance 1"""
        out = normalize_utterance(spec_of(rng.normal(4.0, 3.0, (50, 9))))

        assert abs(out.data.mean()) < 1e-6
        assert abs(out.data.var() - 1.0) < 1e-6

    def test_constant_gives_zeros(self):
        """A constant spectrogram maps to zeros"""
        out = normalize_utterance(spec_of(np.full((4, 3), 2.5)))

        np.testing.assert_array_equal(out.data, np.zeros((4, 3)))

    def test_affine_invariance(self, rng):
        """Scaling by 5 and shifting by 3 does not change the output"""
        data = rng.standard_normal((20, 6))

        np.testing.assert_allclose(
            normalize_utterance(spec_of(5 * data + 3)).data, normalize_utterance(spec_of(data)).data, atol=1e-12,
        )

    def test_idempotent(self, rng):
        """Normalizing twice changes nothing"""
        once = normalize_utterance(spec_of(rng.standard_normal((30, 5))))

        np.testing.assert_allclose(normalize_utterance(once).data, once.data, atol=1e-6)


class TestStats:
    """Test dataset statistics"""

    def test_constant(self):
        """All entries 2.0 give mean 2 and variance 0"""
        stats = compute_stats([spec_of(np.full((5, 3), 2.0))])

        np.testing.assert_array_equal(stats.mean, [2.0, 2.0, 2.0])
        np.testing.assert_array_equal(stats.variance, [0.0, 0.0, 0.0])
        assert stats.count == 5

    def test_two_frames(self):
        """Frames [0] and [2] give mean 1 and population variance 1"""
        stats = compute_stats([spec_of([[0.0]]), spec_of([[2.0]])])

        assert stats.mean.tolist() == [1.0]
        assert stats.variance.tolist() == [1.0]

    def test_matches_two_pass(self, rng):
        """Streaming stats over 1000 frames agree with a two-pass computation"""
        chunks = [rng.normal(3.0, 2.0, (n, 7)) for n in (100, 250, 1, 400, 249)]
        stacked = np.concatenate(chunks)

        stats = compute_stats(spec_of(c) for c in chunks)

        assert stats.count == 1000
        np.testing.assert_allclose(stats.mean, stacked.mean(axis=0), rtol=1e-10)
        np.testing.assert_allclose(stats.variance, stacked.var(axis=0), rtol=1e-10)

    def test_merge_is_exact(self, rng):
        """Merging partial stats equals computing over everything"""
        a, b = rng.standard_normal((30, 4)), rng.standard_normal((70, 4)) + 1.0

        merged = merge_stats(compute_stats([spec_of(a)]), compute_stats([spec_of(b)]))
        full = compute_stats([spec_of(a), spec_of(b)])

        np.testing.assert_allclose(merged.mean, full.mean, rtol=1e-12)
        np.testing.assert_allclose(merged.variance, full.variance, rtol=1e-12)

    def test_empty_stream(self):
        """No frames is an error"""
        with pytest.raises(FeatureError):
            compute_stats([])

    def test_bin_mismatch(self):
        """Mixed bin counts are rejected"""
        with pytest.raises(FeatureError):
            compute_stats([spec_of(np.zeros((2, 3))), spec_of(np.zeros((2, 4)))])

    def test_file_format(self, tmp_path):
        """Stats file is u32 bins, means, variances"""
        stats = FeatureStats(mean=np.array([1.0, -2.0]), variance=np.array([0.5, 4.0]), count=10)
        path = tmp_path / "stats.bin"

        save_stats(stats, path)
        data = path.read_bytes()
        restored = load_stats(path)

        assert len(data) == 4 + 2 * 16
        assert data[:4] == b"\x02\x00\x00\x00"
        np.testing.assert_array_equal(restored.mean, stats.mean)
        np.testing.assert_array_equal(restored.variance, stats.variance)

    def test_truncated_file(self):
        """Wrong byte count is a feature error"""
        with pytest.raises(FeatureError):
            stats_from_bytes(b"\x02\x00\x00\x00" + b"\x00" * 8)


class TestNormalizeFeatures:
    """Test per-bin normalization"""

    def test_formula(self):
        """(x - mean) / sqrt(var + 1e-8) per bin"""
        stats = FeatureStats(mean=np.array([1.0, 2.0]), variance=np.array([4.0, 0.0]), count=3)

        out = normalize_features(spec_of([[3.0, 2.0]]), stats)

        np.testing.assert_allclose(out.data, [[2.0 / np.sqrt(4.0 + 1e-8), 0.0]])

    def test_mismatch(self):
        """Bins must match the stats"""
        stats = FeatureStats(mean=np.zeros(3), variance=np.ones(3), count=1)

        with pytest.raises(FeatureError):
            normalize_features(spec_of(np.zeros((2, 4))), stats)

    def test_pipeline_order(self, tone):
        """extract_features normalizes the utterance before applying stats"""
        buffer = tone(700.0, seconds=0.3)
        stats = compute_stats([normalize_utterance(spectrogram(buffer))])

        out = extract_features(buffer, stats)
        expected = normalize_features(normalize_utterance(spectrogram(buffer)), stats)

        np.testing.assert_array_equal(out.data, expected.data)
