"""
Tests for the acoustic model forward/backward passes
"""
import math

import numpy as np
import pytest
from scipy.special import logsumexp

from app.exceptions import ConfigurationError
from app.models import layers
from app.models.layers import EVAL, TRAIN
from app.models.speech_model import (
    RECURRENT_INIT,
    count_parameters,
    init_params,
    init_state,
    model_backward,
    model_forward,
    output_frames,
    param_shapes,
    predict_lattices,
    residual_block_forward,
)
from app.rng import make_rng
from app.schemas.model import ConvSpec, ModelConfig
from app.services.ctc_service import ctc_loss, ctc_loss_and_grad

LABELS = [(1, 2), (3,)]


@pytest.fixture
def features(rng):
    return [rng.standard_normal((12, 9)), rng.standard_normal((9, 9))]


@pytest.fixture
def model(tiny_model_config):
    return init_params(tiny_model_config, make_rng(3)), init_state(tiny_model_config)


class TestShapes:
    """Test parameter layout and output lengths"""

    def test_parameter_count(self, tiny_model_config):
        """Hand count for the tiny layout"""
        # front 24, residual block 85, bidirectional GRU 324, fc 36, output 20
        assert count_parameters(tiny_model_config) == 489

    def test_init_matches_shapes(self, tiny_model_config):
        """init_params creates exactly the listed tensors"""
        params = init_params(tiny_model_config, make_rng(0))

        assert {name: p.shape for name, p in params.items()} == dict(param_shapes(tiny_model_config))

    def test_init_ranges(self, tiny_model_config):
        """Recurrent weights in +-1/32, batch-norm scales one, biases zero"""
        params = init_params(tiny_model_config, make_rng(0))

        for name, value in params.items():
            if name.endswith(".gamma"):
                assert np.all(value == 1.0)
            elif name.endswith(".beta") or name.endswith(".b"):
                assert not np.any(value)
            elif name.startswith("rnn"):
                assert np.all(np.abs(value) <= RECURRENT_INIT)
        bound = math.sqrt(6.0 / (1 * 3 * 3))
        assert np.all(np.abs(params["front.w"]) <= bound)

    def test_init_is_seeded(self, tiny_model_config):
        """The same stream gives the same parameters"""
        first = init_params(tiny_model_config, make_rng(9))
        second = init_params(tiny_model_config, make_rng(9))

        assert all(np.array_equal(first[name], second[name]) for name in first)

    def test_output_frames(self, tiny_model_config, features, model):
        """Lattice lengths follow the time strides"""
        params, state = model

        lattices = predict_lattices(features, params, state, tiny_model_config)

        assert output_frames(tiny_model_config, 12) == 6
        assert [len(lattice) for lattice in lattices] == [6, 5]

    def test_full_scale_builds(self):
        """The full-size layout has the documented depth"""
        config = ModelConfig.full_scale()

        shapes = param_shapes(config)

        assert shapes["rnn3.bwd.u"] == (3 * 1024, 1024)
        assert shapes["out.w"] == (30, 1024)
        assert "block3.proj.w" in shapes


class TestForward:
    """Test inference behavior"""

    def test_rows_are_log_distributions(self, tiny_model_config, features, model):
        """Every lattice row sums to one in probability space"""
        params, state = model

        for lattice in predict_lattices(features, params, state, tiny_model_config):
            np.testing.assert_allclose(logsumexp(lattice, axis=1), 0.0, atol=1e-12)

    def test_eval_is_deterministic(self, tiny_model_config, features, model):
        """Eval mode ignores dropout and gives identical lattices"""
        params, state = model

        first = predict_lattices(features, params, state, tiny_model_config)
        second = predict_lattices(features, params, state, tiny_model_config)

        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)

    def test_padding_does_not_leak(self, tiny_model_config, features, model):
        """An utterance decodes the same alone and next to a longer one"""
        params, state = model

        batched = predict_lattices(features, params, state, tiny_model_config)[1]
        alone = predict_lattices(features[1:], params, state, tiny_model_config)[0]

        np.testing.assert_allclose(batched, alone, atol=1e-10)

    def test_train_mode_updates_running_statistics(self, tiny_model_config, features, model):
        """A train-mode pass moves the batch-norm running means"""
        params, state = model

        model_forward(features, params, state, tiny_model_config, mode=TRAIN, rng=make_rng(1))

        assert np.any(state["front.bn.mean"] != 0.0)

    def test_dropout_changes_train_output(self, tiny_model_config, features, model):
        """Different dropout streams give different train-mode outputs"""
        params, state = model

        a = model_forward(features, params, state, tiny_model_config, mode=TRAIN, rng=make_rng(1))
        b = model_forward(features, params, state, tiny_model_config, mode=TRAIN, rng=make_rng(2))

        assert not np.allclose(a.log_probs, b.log_probs)

    def test_dropout_needs_rng(self, tiny_model_config, features, model):
        params, state = model

        with pytest.raises(ConfigurationError):
            model_forward(features, params, state, tiny_model_config, mode=TRAIN)

    def test_wrong_bin_count(self, tiny_model_config, model, rng):
        """Features must have the configured number of bins"""
        params, state = model

        with pytest.raises(ConfigurationError):
            predict_lattices([rng.standard_normal((10, 8))], params, state, tiny_model_config)

    def test_eval_has_no_cache(self, tiny_model_config, features, model):
        params, state = model

        output = model_forward(features, params, state, tiny_model_config, mode=EVAL)

        assert output.cache is None
        with pytest.raises(ConfigurationError):
            model_backward([None, None], output, params, tiny_model_config)


class TestResidualBlock:
    """Shortcut path of a single residual block"""

    @staticmethod
    def _no_dropout(x, p, mask_shape, fixed_across_time):
        return x, None

    @staticmethod
    def _silence_convs(params):
        for key in params:
            if key.startswith("block0.conv"):
                params[key] = np.zeros_like(params[key])

    def _run(self, config, h, in_channels, params, state):
        lengths = np.array([h.shape[3], h.shape[3] - 1])
        mask = layers.time_mask(lengths, h.shape[3]).T[:, None, None, :]
        bn_kwargs = {"mode": EVAL, "momentum": config.batchnorm_momentum}
        return residual_block_forward(
            h, lengths, mask, "block0", config.residual_blocks[0], in_channels,
            params, state, self._no_dropout, bn_kwargs, 0.0,
        )

    def test_identity_shortcut(self, tiny_model_config, rng):
        config = tiny_model_config.model_copy(update={"residual_blocks": [ConvSpec.of((2, 3, 3, 1, 1))]})
        params, state = init_params(config, make_rng(3)), init_state(config)
        assert "block0.proj.w" not in params
        self._silence_convs(params)
        h = rng.standard_normal((2, 2, 4, 5))
        out, lengths, _, _ = self._run(config, h, 2, params, state)
        np.testing.assert_array_equal(out, h)
        assert list(lengths) == [5, 4]

    def test_projection_shortcut_on_channel_change(self, tiny_model_config, rng):
        params, state = init_params(tiny_model_config, make_rng(3)), init_state(tiny_model_config)
        self._silence_convs(params)
        h = rng.standard_normal((2, 2, 4, 5))
        out, _, out_mask, _ = self._run(tiny_model_config, h, 2, params, state)
        expected, _ = layers.pointwise_conv_forward(h, params["block0.proj.w"], params["block0.proj.b"])
        assert out.shape == (2, 3, 4, 5)
        np.testing.assert_allclose(out, expected * out_mask, atol=1e-12)


class TestBackward:
    """Test end-to-end gradients through CTC"""

    def test_matches_finite_differences(self, tiny_model_config, features, model):
        """Analytic gradients agree with central differences, dropout masks held fixed"""
        params, state = model

        def forward():
            return model_forward(features, params, state, tiny_model_config, mode=TRAIN, rng=make_rng(5))

        def loss() -> float:
            return sum(ctc_loss(lattice, labels).loss for lattice, labels in zip(forward().lattices(), LABELS))

        output = forward()
        grads_logits = [ctc_loss_and_grad(lattice, labels)[1] for lattice, labels in zip(output.lattices(), LABELS)]
        grads = model_backward(grads_logits, output, params, tiny_model_config)

        assert set(grads) == set(params)
        picker = make_rng(6)
        eps = 1e-6
        for name, value in params.items():
            for _ in range(2):
                index = tuple(int(picker.integers(0, n)) for n in value.shape)
                saved = value[index]
                value[index] = saved + eps
                up = loss()
                value[index] = saved - eps
                down = loss()
                value[index] = saved
                numeric = (up - down) / (2 * eps)
                assert abs(grads[name][index] - numeric) <= 1e-5 * max(1.0, abs(numeric)), name
