"""
Tests for raw-audio augmentation
"""
import numpy as np
import pytest
from scipy import stats

from app.exceptions import ConfigurationError, SignalError
from app.rng import make_rng
from app.schemas.audio import AudioBuffer
from app.schemas.augmentation import AugmentationPolicy, AugmentationSpec
from app.services import augmentation_service as aug


def rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x ** 2)))


def measured_snr(clean: AudioBuffer, noisy: AudioBuffer) -> float:
    noise = noisy.samples - clean.samples
    return 10 * np.log10(np.mean(clean.samples ** 2) / np.mean(noise ** 2))


@pytest.fixture(scope="module")
def default_draws():
    """10 000 specs from the default policy"""
    rng = make_rng(11)
    policy = AugmentationPolicy()
    return [aug.sample_spec(policy, rng) for _ in range(10000)]


class TestSampleSpec:
    """Test policy sampling"""

    def test_disabled_gives_identity(self):
        """With every perturbation disabled the spec is the identity"""
        spec = aug.sample_spec(AugmentationPolicy.preset("none"), make_rng(0))

        assert spec.tempo_factor == 1.0
        assert spec.pitch_cents == 0.0
        assert spec.gain_db == 0.0
        assert spec.shift_ms == 0.0
        assert spec.snr_db is None

    @pytest.mark.parametrize("field, low, high", [
        ("tempo_factor", 0.7, 1.3),
        ("pitch_cents", -500.0, 500.0),
        ("gain_db", -20.0, 10.0),
        ("shift_ms", 0.0, 10.0),
        ("snr_db", 10.0, 15.0),
    ])
    def test_draws_are_uniform(self, default_draws, field, low, high):
        """Each parameter passes a Kolmogorov-Smirnov test against its uniform range at 0.01"""
        values = [getattr(spec, field) for spec in default_draws]

        assert low <= min(values) and max(values) <= high
        assert stats.kstest(values, "uniform", args=(low, high - low)).pvalue > 0.01

    def test_toggling_keeps_other_draws(self):
        """Disabling tempo does not change the gain drawn from the same stream"""
        full = aug.sample_spec(AugmentationPolicy.preset("all"), make_rng(5))
        noise_only = aug.sample_spec(AugmentationPolicy.preset("noise"), make_rng(5))

        assert noise_only.tempo_factor == 1.0
        assert noise_only.gain_db == full.gain_db
        assert noise_only.snr_db == full.snr_db

    def test_invalid_range_rejected(self):
        """low > high fails validation"""
        with pytest.raises(ValueError):
            AugmentationPolicy(gain_range_db=(5.0, -5.0))


class TestTempo:
    """Test WSOLA time stretching"""

    def test_identity(self, tone):
        """factor 1.0 returns the input"""
        buffer = tone(seconds=0.3)

        np.testing.assert_array_equal(aug.tempo(buffer, 1.0).samples, buffer.samples)

    @pytest.mark.parametrize("factor", [0.7, 0.85, 1.0, 1.15, 1.3])
    def test_duration_law(self, tone, factor):
        """Output length is input length / factor within 2%"""
        buffer = tone(seconds=1.0)
        expected = len(buffer) / factor

        out = aug.tempo(buffer, factor)

        assert abs(len(out) - expected) / expected < 0.02

    def test_ten_seconds_at_1_3(self, tone):
        """10 s at factor 1.3 lasts between 7.54 s and 7.85 s"""
        out = aug.tempo(tone(seconds=10.0), 1.3)

        assert 7.54 <= out.duration <= 7.85

    @pytest.mark.parametrize("factor", [0.7, 1.3])
    def test_pitch_preserved(self, tone, dominant_frequency, factor):
        """A 440 Hz tone stays within 1% of 440 Hz"""
        out = aug.tempo(tone(440.0, seconds=1.0), factor)

        assert abs(dominant_frequency(out) - 440.0) < 4.4

    def test_short_buffer_unchanged(self):
        """Buffers shorter than one segment pass through"""
        buffer = AudioBuffer(samples=np.ones(50), sample_rate=16000)

        np.testing.assert_array_equal(aug.tempo(buffer, 1.2).samples, buffer.samples)

    def test_factor_out_of_range(self, tone):
        """factors outside (0, 4] are rejected"""
        with pytest.raises(ConfigurationError):
            aug.tempo(tone(seconds=0.1), 4.5)


class TestPitch:
    """Test duration-preserving pitch shift"""

    def test_identity(self, tone):
        """0 cents returns the input"""
        buffer = tone(seconds=0.3)

        np.testing.assert_array_equal(aug.pitch(buffer, 0.0).samples, buffer.samples)

    def test_octave_up(self, tone, dominant_frequency):
        """+1200 cents doubles the frequency and keeps the duration"""
        buffer = tone(440.0, seconds=1.0)

        out = aug.pitch(buffer, 1200.0)

        assert abs(dominant_frequency(out) - 880.0) < 8.8
        assert abs(len(out) - len(buffer)) <= 0.02 * len(buffer)

    def test_down_500_cents(self, tone, dominant_frequency):
        """-500 cents lands near 329.6 Hz"""
        out = aug.pitch(tone(440.0, seconds=1.0), -500.0)

        assert abs(dominant_frequency(out) - 440.0 * 2 ** (-500 / 1200)) < 3.3

    def test_out_of_range(self, tone):
        """|cents| above 1200 is rejected"""
        with pytest.raises(ConfigurationError):
            aug.pitch(tone(seconds=0.1), 1300.0)

    def test_higher_pitch_slower_tempo(self, tone, dominant_frequency):
        """Pitch up with tempo down is constructible, unlike speed perturbation"""
        buffer = tone(440.0, seconds=1.0)
        spec = AugmentationSpec(tempo_factor=0.8, pitch_cents=300.0)

        out = aug.apply(buffer, spec)

        assert abs(len(out) - len(buffer) / 0.8) < 0.02 * len(buffer) / 0.8
        target = 440.0 * 2 ** (300 / 1200)
        assert abs(dominant_frequency(out) - target) < 0.01 * target


class TestGainShiftNoise:
    """Test gain, shift and white noise"""

    def test_gain_minus_20(self, tone):
        """-20 dB scales RMS by 0.1"""
        buffer = tone(seconds=0.2)

        out = aug.gain(buffer, -20.0)

        assert rms(out.samples) / rms(buffer.samples) == pytest.approx(0.1, rel=1e-6)

    def test_gain_doubling(self, tone):
        """+6.0206 dB doubles every sample"""
        buffer = tone(seconds=0.2)

        np.testing.assert_allclose(aug.gain(buffer, 6.0206).samples, 2 * buffer.samples, rtol=1e-6)

    def test_gain_does_not_clip(self):
        """Gain never clips"""
        buffer = AudioBuffer(samples=np.array([0.9, -0.9]), sample_rate=8000)

        assert np.max(aug.gain(buffer, 12.0).samples) > 1.0

    def test_shift_pads_zeros(self, tone):
        """10 ms at 16 kHz prepends 160 zeros"""
        buffer = tone(seconds=0.1)

        out = aug.shift(buffer, 10.0)

        assert len(out) == len(buffer) + 160
        assert not np.any(out.samples[:160])
        np.testing.assert_array_equal(out.samples[160:], buffer.samples)

    def test_shift_rounds_to_nearest(self, tone):
        """0.03 ms at 16 kHz rounds to no padding"""
        buffer = tone(seconds=0.1)

        assert len(aug.shift(buffer, 0.03)) == len(buffer)

    @pytest.mark.parametrize("snr_db", [0.0, 10.0, 15.0, 40.0])
    def test_snr_exact(self, tone, rng, snr_db):
        """Realized SNR matches the request within 0.01 dB"""
        buffer = tone(seconds=0.5)

        out = aug.add_white_noise(buffer, snr_db, rng)

        assert abs(measured_snr(buffer, out) - snr_db) < 0.01

    def test_zero_snr_equal_rms(self, tone, rng):
        """At 0 dB the noise RMS equals the signal RMS"""
        buffer = tone(seconds=0.5, amplitude=1.0)

        noise = aug.add_white_noise(buffer, 0.0, rng).samples - buffer.samples

        assert rms(noise) == pytest.approx(rms(buffer.samples), rel=1e-3)

    def test_infinite_snr_is_identity(self, tone, rng):
        """snr = +inf adds nothing"""
        buffer = tone(seconds=0.1)

        np.testing.assert_array_equal(aug.add_white_noise(buffer, float("inf"), rng).samples, buffer.samples)

    def test_silent_buffer_rejected(self, rng):
        """SNR is undefined for silence"""
        with pytest.raises(SignalError):
            aug.add_white_noise(AudioBuffer(samples=np.zeros(100), sample_rate=8000), 10.0, rng)


class TestApply:
    """Test the composed perturbation"""

    def test_identity_spec(self, tone):
        """The identity spec leaves audio unchanged"""
        buffer = tone(seconds=0.2)

        np.testing.assert_array_equal(aug.apply(buffer, AugmentationSpec.identity()).samples, buffer.samples)

    def test_gain_only(self, tone):
        """A gain-only spec equals gain()"""
        buffer = tone(seconds=0.2)

        out = aug.apply(buffer, AugmentationSpec(gain_db=-20.0))

        np.testing.assert_array_equal(out.samples, aug.gain(buffer, -20.0).samples)

    def test_deterministic(self, tone):
        """Same buffer and spec give bit-identical output"""
        buffer = tone(seconds=0.3)
        spec = AugmentationSpec(tempo_factor=1.1, pitch_cents=-120.0, gain_db=-3.0,
                                shift_ms=4.0, snr_db=12.0, seed=42)

        first = aug.apply(buffer, spec)
        second = aug.apply(buffer, spec)

        np.testing.assert_array_equal(first.samples, second.samples)

    def test_speed_changes_both(self, tone, dominant_frequency):
        """Speed 1.1 shortens by 1/1.1 and raises pitch by 1.1"""
        buffer = tone(440.0, seconds=1.0)

        out = aug.speed(buffer, 1.1)

        assert abs(len(out) - len(buffer) / 1.1) <= 2
        assert abs(dominant_frequency(out) - 484.0) < 4.84

    def test_speed_rejects_non_positive(self, tone):
        """speed factor must be positive"""
        with pytest.raises(ConfigurationError):
            aug.speed(tone(seconds=0.1), 0.0)
