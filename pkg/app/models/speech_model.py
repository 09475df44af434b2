"""
Convolutional + bidirectional GRU acoustic model with a CTC output layer

Layout: front convolution -> residual blocks of depthwise separable
convolutions -> per-frame flatten of (channels x freq) -> stacked
bidirectional GRUs -> fully connected hidden layer -> output projection ->
log-softmax. Batch norm follows every layer (sequence-wise on the recurrent
input projections) and padded frames are masked out of every statistic.
"""
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from scipy.special import log_softmax

from app.exceptions import ConfigurationError
from app.models import layers
from app.models.layers import EVAL, TRAIN
from app.schemas.features import Spectrogram
from app.schemas.model import ConvSpec, ModelConfig
from app.services.dropout_service import (
    DropoutMask,
    apply_eval,
    apply_train,
    apply_train_backward,
    sample_sequence_mask,
    sample_standard_mask,
)

logger = structlog.get_logger(__name__)

Params = Dict[str, np.ndarray]
RECURRENT_INIT = 1.0 / 32.0
DIRECTIONS = ("fwd", "bwd")


def _needs_projection(block: ConvSpec, in_channels: int) -> bool:
    return block.stride_freq > 1 or block.stride_time > 1 or block.channels != in_channels


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def frequency_sizes(config: ModelConfig, input_bins: Optional[int] = None) -> List[int]:
    """Frequency extent after the front conv and after each residual block"""
    bins = config.input_bins if input_bins is None else input_bins
    front = config.front_conv
    sizes = [layers.conv_output_size(bins, front.filter_freq, front.stride_freq)]
    for block in config.residual_blocks:
        sizes.append(_ceil_div(sizes[-1], block.stride_freq))
    return sizes


def rnn_input_size(config: ModelConfig, input_bins: Optional[int] = None) -> int:
    return config.residual_blocks[-1].channels * frequency_sizes(config, input_bins)[-1]


def output_frames_front(config: ModelConfig, num_frames: int) -> int:
    """Frames after the front conv, which pads time by half its filter"""
    front = config.front_conv
    return layers.conv_output_size(num_frames, front.filter_time, front.stride_time, front.filter_time // 2)


def output_frames(config: ModelConfig, num_frames: int) -> int:
    """Lattice length for an utterance of ``num_frames`` spectrogram frames"""
    frames = output_frames_front(config, num_frames)
    for block in config.residual_blocks:
        frames = _ceil_div(frames, block.stride_time)
    return frames


def param_shapes(config: ModelConfig, input_bins: Optional[int] = None) -> "OrderedDict[str, Tuple[int, ...]]":
    """Every parameter name and shape, in initialization order"""
    shapes: "OrderedDict[str, Tuple[int, ...]]" = OrderedDict()
    front = config.front_conv
    shapes["front.w"] = (front.channels, 1, front.filter_freq, front.filter_time)
    shapes["front.b"] = (front.channels,)
    shapes["front.bn.gamma"] = (front.channels,)
    shapes["front.bn.beta"] = (front.channels,)

    in_channels = front.channels
    for k, block in enumerate(config.residual_blocks):
        name = f"block{k}"
        out_channels = block.channels
        for stage, stage_in in (("1", in_channels), ("2", out_channels)):
            shapes[f"{name}.bn{stage}.gamma"] = (stage_in,)
            shapes[f"{name}.bn{stage}.beta"] = (stage_in,)
            shapes[f"{name}.conv{stage}.depthwise"] = (stage_in, block.filter_freq, block.filter_time)
            shapes[f"{name}.conv{stage}.pointwise"] = (out_channels, stage_in)
            shapes[f"{name}.conv{stage}.b"] = (out_channels,)
        if _needs_projection(block, in_channels):
            shapes[f"{name}.proj.w"] = (out_channels, in_channels)
            shapes[f"{name}.proj.b"] = (out_channels,)
        in_channels = out_channels

    width = rnn_input_size(config, input_bins)
    hidden = config.rnn_hidden
    for layer in range(config.rnn_layers):
        for direction in DIRECTIONS:
            name = f"rnn{layer}.{direction}"
            shapes[f"{name}.w"] = (3 * hidden, width)
            shapes[f"{name}.bn.gamma"] = (3 * hidden,)
            shapes[f"{name}.bn.beta"] = (3 * hidden,)
            shapes[f"{name}.u"] = (3 * hidden, hidden)
            shapes[f"{name}.b"] = (3 * hidden,)
        width = 2 * hidden

    shapes["fc.w"] = (config.fc_hidden, width)
    shapes["fc.b"] = (config.fc_hidden,)
    shapes["fc.bn.gamma"] = (config.fc_hidden,)
    shapes["fc.bn.beta"] = (config.fc_hidden,)
    shapes["out.w"] = (config.num_classes, config.fc_hidden)
    shapes["out.b"] = (config.num_classes,)
    return shapes


def count_parameters(config: ModelConfig, input_bins: Optional[int] = None) -> int:
    return sum(int(np.prod(shape)) for shape in param_shapes(config, input_bins).values())


def _fan_in(name: str, shape: Tuple[int, ...]) -> int:
    if name.endswith(".depthwise"):
        return shape[1] * shape[2]
    return int(np.prod(shape[1:]))


def init_params(config: ModelConfig, rng: np.random.Generator) -> Params:
    """
    Recurrent input and hidden weights ~ U(-1/32, 1/32); convolution and
    fully connected weights ~ U(+-sqrt(6 / fan_in)); biases and batch-norm
    shifts zero, batch-norm scales one.
    """
    params: Params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".gamma"):
            params[name] = np.ones(shape)
        elif name.endswith(".beta") or name.endswith(".b"):
            params[name] = np.zeros(shape)
        elif name.startswith("rnn"):
            params[name] = rng.uniform(-RECURRENT_INIT, RECURRENT_INIT, size=shape)
        else:
            bound = math.sqrt(6.0 / _fan_in(name, shape))
            params[name] = rng.uniform(-bound, bound, size=shape)
    logger.debug("params_initialized", parameters=sum(p.size for p in params.values()))
    return params


def init_state(config: ModelConfig) -> Params:
    """Batch-norm running statistics: zero means, unit variances"""
    state: Params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".gamma"):
            prefix = name[: -len(".gamma")]
            state[f"{prefix}.mean"] = np.zeros(shape)
            state[f"{prefix}.var"] = np.ones(shape)
    return state


def batch_features(features: Sequence[Union[Spectrogram, np.ndarray]]) -> Tuple[np.ndarray, np.ndarray]:
    """Stack [frames, bins] features into a zero-padded [B, 1, bins, T] batch plus lengths"""
    if not features:
        raise ConfigurationError("cannot run the model on an empty batch")
    arrays = [f.data if isinstance(f, Spectrogram) else np.asarray(f, dtype=np.float64) for f in features]
    bins = {a.shape[1] for a in arrays}
    if len(bins) != 1:
        raise ConfigurationError(f"features in one batch have different bin counts: {sorted(bins)}")
    lengths = np.array([a.shape[0] for a in arrays], dtype=np.int64)
    if np.any(lengths == 0):
        raise ConfigurationError("every utterance needs at least one frame")
    batch = np.zeros((len(arrays), 1, bins.pop(), int(lengths.max())))
    for i, a in enumerate(arrays):
        batch[i, 0, :, :a.shape[0]] = a.T
    return batch, lengths


@dataclass
class ModelOutput:
    """Per-frame log-probabilities [B, T, C] with per-utterance valid lengths"""
    log_probs: np.ndarray
    lengths: np.ndarray
    cache: Optional[dict] = field(default=None, repr=False)

    def lattices(self) -> List[np.ndarray]:
        return [self.log_probs[b, :int(n)] for b, n in enumerate(self.lengths)]


class _Dropout:
    """Dropout at one placement; remembers the train mask for backward"""

    def __init__(self, mode: str, rng: Optional[np.random.Generator]):
        self.mode = mode
        self.rng = rng

    def __call__(self, x: np.ndarray, p: float, mask_shape: Tuple[int, ...], fixed_across_time: bool):
        if p == 0.0:
            return x, None
        if self.mode == EVAL:
            return apply_eval(x, p), None
        if fixed_across_time:
            mask = sample_sequence_mask(mask_shape, p, self.rng)
        else:
            mask = sample_standard_mask(mask_shape, p, self.rng)
        return apply_train(x, mask), mask


def _undrop(dout: np.ndarray, mask: Optional[DropoutMask]) -> np.ndarray:
    return dout if mask is None else apply_train_backward(dout, mask)


def model_forward(
    features: Sequence[Union[Spectrogram, np.ndarray]],
    params: Params,
    state: Params,
    config: ModelConfig,
    mode: str = TRAIN,
    rng: Optional[np.random.Generator] = None,
) -> ModelOutput:
    """
    Forward pass over a batch of normalized spectrograms

    Train mode samples dropout masks from ``rng``, normalizes with batch
    statistics and updates ``state`` in place; eval mode is deterministic.
    The cache needed by model_backward is kept in train mode only.
    """
    if mode not in (TRAIN, EVAL):
        raise ConfigurationError(f"mode must be '{TRAIN}' or '{EVAL}', got {mode!r}")
    drop = config.dropout
    if mode == TRAIN and drop.enabled and rng is None:
        raise ConfigurationError("train-mode forward with dropout needs an rng")
    x, lengths = batch_features(features)
    if x.shape[2] != config.input_bins:
        raise ConfigurationError(f"features have {x.shape[2]} bins, model expects {config.input_bins}")
    if x.shape[3] < 1:
        raise ConfigurationError("features have no frames")

    dropout = _Dropout(mode, rng)
    bn_kwargs = {"mode": mode, "momentum": config.batchnorm_momentum}
    cache: dict = {"blocks": [], "rnn": []}

    # utterance-level data dropout on the spectrogram
    x, cache["data_mask"] = dropout(x, drop.data, x.shape, fixed_across_time=False)

    front = config.front_conv
    pad_time = front.filter_time // 2
    h, cache["front_conv"] = layers.conv2d_forward(
        x, params["front.w"], params["front.b"],
        stride=(front.stride_freq, front.stride_time), padding=(0, pad_time),
    )
    lengths = np.array([output_frames_front(config, n) for n in lengths], dtype=np.int64)
    mask = layers.time_mask(lengths, h.shape[3]).T[:, None, None, :]
    cache["front_mask"] = mask
    h = h * mask
    h, cache["front_bn"] = layers.batchnorm_forward(
        h, params["front.bn.gamma"], params["front.bn.beta"],
        state["front.bn.mean"], state["front.bn.var"], axis=1, mask=mask, **bn_kwargs,
    )
    h, cache["front_relu"] = layers.relu_forward(h)

    in_channels = front.channels
    for k, block in enumerate(config.residual_blocks):
        h, lengths, mask, block_cache = residual_block_forward(
            h, lengths, mask, f"block{k}", block, in_channels, params, state, dropout, bn_kwargs, drop.conv,
        )
        cache["blocks"].append(block_cache)
        in_channels = block.channels

    B, C, F, T = h.shape
    cache["flat_shape"] = h.shape
    x = h.transpose(3, 0, 1, 2).reshape(T, B, C * F)
    seq_mask = layers.time_mask(lengths, T)[:, :, None]

    for layer in range(config.rnn_layers):
        layer_cache: dict = {}
        x, layer_cache["mask"] = dropout(x, drop.recurrent, (1, B, x.shape[2]), fixed_across_time=True)
        outputs = []
        for direction in DIRECTIONS:
            name = f"rnn{layer}.{direction}"
            a, linear_cache = layers.linear_forward(x, params[f"{name}.w"])
            a, bn_cache = layers.batchnorm_forward(
                a, params[f"{name}.bn.gamma"], params[f"{name}.bn.beta"],
                state[f"{name}.bn.mean"], state[f"{name}.bn.var"],
                axis=2, mask=seq_mask, batch_axis=1, **bn_kwargs,
            )
            out, recurrence_cache = layers.gru_recurrence_forward(
                a, params[f"{name}.u"], params[f"{name}.b"], reverse=direction == "bwd", lengths=lengths,
            )
            layer_cache[direction] = (linear_cache, bn_cache, recurrence_cache)
            outputs.append(out)
        x = np.concatenate(outputs, axis=-1)
        cache["rnn"].append(layer_cache)

    x, cache["fc_mask"] = dropout(x, drop.fc, x.shape, fixed_across_time=False)
    a, cache["fc"] = layers.linear_forward(x, params["fc.w"], params["fc.b"])
    a, cache["fc_bn"] = layers.batchnorm_forward(
        a, params["fc.bn.gamma"], params["fc.bn.beta"], state["fc.bn.mean"], state["fc.bn.var"],
        axis=2, mask=seq_mask, batch_axis=1, **bn_kwargs,
    )
    a, cache["fc_relu"] = layers.relu_forward(a)
    a, cache["out_mask"] = dropout(a, drop.fc, a.shape, fixed_across_time=False)
    logits, cache["out"] = layers.linear_forward(a, params["out.w"], params["out.b"])

    log_probs = log_softmax(logits, axis=-1).transpose(1, 0, 2)
    cache["seq_mask"] = seq_mask
    return ModelOutput(log_probs=log_probs, lengths=lengths, cache=cache if mode == TRAIN else None)


def residual_block_forward(h, lengths, mask, name, block, in_channels, params, state, dropout, bn_kwargs, p_conv):
    """Pre-activation residual block: (BN -> ReLU -> dropout -> sepconv) twice plus shortcut"""
    cache: dict = {"input_shape": h.shape}
    stride = (block.stride_freq, block.stride_time)
    padding = (block.filter_freq // 2, block.filter_time // 2)

    out_lengths = np.array([_ceil_div(int(n), block.stride_time) for n in lengths], dtype=np.int64)
    out_steps = _ceil_div(h.shape[3], block.stride_time)
    out_mask = layers.time_mask(out_lengths, out_steps).T[:, None, None, :]
    cache["out_mask"] = out_mask

    a = h
    for stage, stage_mask, stage_stride in (("1", mask, stride), ("2", out_mask, (1, 1))):
        a, cache[f"bn{stage}"] = layers.batchnorm_forward(
            a, params[f"{name}.bn{stage}.gamma"], params[f"{name}.bn{stage}.beta"],
            state[f"{name}.bn{stage}.mean"], state[f"{name}.bn{stage}.var"],
            axis=1, mask=stage_mask, **bn_kwargs,
        )
        a, cache[f"relu{stage}"] = layers.relu_forward(a)
        B, C, F, _ = a.shape
        a, cache[f"drop{stage}"] = dropout(a, p_conv, (B, C, F, 1), fixed_across_time=True)
        a, cache[f"conv{stage}"] = layers.sepconv2d_forward(
            a, params[f"{name}.conv{stage}.depthwise"], params[f"{name}.conv{stage}.pointwise"],
            params[f"{name}.conv{stage}.b"], stride=stage_stride, padding=padding,
        )
        a = a * out_mask

    if _needs_projection(block, in_channels):
        shortcut, cache["proj"] = layers.pointwise_conv_forward(
            h[:, :, ::block.stride_freq, ::block.stride_time], params[f"{name}.proj.w"], params[f"{name}.proj.b"],
        )
        shortcut = shortcut * out_mask
        cache["stride"] = (block.stride_freq, block.stride_time)
    else:
        shortcut = h
        cache["proj"] = None
    return a + shortcut, out_lengths, out_mask, cache


def residual_block_backward(dout, name, cache, grads):
    out_mask = cache["out_mask"]
    da = dout
    dx = np.zeros(cache["input_shape"])
    for stage in ("2", "1"):
        da = da * out_mask
        da, d_depthwise, d_pointwise, db = layers.sepconv2d_backward(da, cache[f"conv{stage}"])
        grads[f"{name}.conv{stage}.depthwise"] = d_depthwise
        grads[f"{name}.conv{stage}.pointwise"] = d_pointwise
        grads[f"{name}.conv{stage}.b"] = db
        da = _undrop(da, cache[f"drop{stage}"])
        da = layers.relu_backward(da, cache[f"relu{stage}"])
        da, grads[f"{name}.bn{stage}.gamma"], grads[f"{name}.bn{stage}.beta"] = layers.batchnorm_backward(
            da, cache[f"bn{stage}"]
        )
    dx += da

    if cache["proj"] is not None:
        d_sub, grads[f"{name}.proj.w"], grads[f"{name}.proj.b"] = layers.pointwise_conv_backward(
            dout * out_mask, cache["proj"]
        )
        sf, st = cache["stride"]
        dx[:, :, ::sf, ::st] += d_sub
    else:
        dx += dout
    return dx


def model_backward(
    grad_logits: Union[np.ndarray, Sequence[np.ndarray]],
    output: ModelOutput,
    params: Params,
    config: ModelConfig,
) -> Params:
    """
    Gradients of every parameter given d(loss)/d(logits)

    ``grad_logits`` is either a padded [B, T, C] array or one [T_b, C] array
    per utterance (for example the CTC logit gradients); padded frames
    contribute nothing.
    """
    cache = output.cache
    if cache is None:
        raise ConfigurationError("model_backward needs the cache of a train-mode forward pass")
    dlogits = _pad_gradients(grad_logits, output.log_probs.shape)
    dlogits = dlogits.transpose(1, 0, 2) * cache["seq_mask"]
    grads: Params = {}

    da, grads["out.w"], grads["out.b"] = layers.linear_backward(dlogits, cache["out"])
    da = _undrop(da, cache["out_mask"])
    da = layers.relu_backward(da, cache["fc_relu"])
    da, grads["fc.bn.gamma"], grads["fc.bn.beta"] = layers.batchnorm_backward(da, cache["fc_bn"])
    dx, grads["fc.w"], grads["fc.b"] = layers.linear_backward(da, cache["fc"])
    dx = _undrop(dx, cache["fc_mask"])

    hidden = config.rnn_hidden
    for layer in range(config.rnn_layers - 1, -1, -1):
        layer_cache = cache["rnn"][layer]
        d_input = None
        for offset, direction in enumerate(DIRECTIONS):
            name = f"rnn{layer}.{direction}"
            linear_cache, bn_cache, recurrence_cache = layer_cache[direction]
            d_half = dx[..., offset * hidden:(offset + 1) * hidden]
            da, grads[f"{name}.u"], grads[f"{name}.b"] = layers.gru_recurrence_backward(d_half, recurrence_cache)
            da, grads[f"{name}.bn.gamma"], grads[f"{name}.bn.beta"] = layers.batchnorm_backward(da, bn_cache)
            d_part, grads[f"{name}.w"], _ = layers.linear_backward(da, linear_cache)
            d_input = d_part if d_input is None else d_input + d_part
        dx = _undrop(d_input, layer_cache["mask"])

    B, C, F, T = cache["flat_shape"]
    dh = dx.reshape(T, B, C, F).transpose(1, 2, 3, 0)

    for k in range(len(config.residual_blocks) - 1, -1, -1):
        dh = residual_block_backward(dh, f"block{k}", cache["blocks"][k], grads)

    dh = layers.relu_backward(dh, cache["front_relu"])
    dh, grads["front.bn.gamma"], grads["front.bn.beta"] = layers.batchnorm_backward(dh, cache["front_bn"])
    dh = dh * cache["front_mask"]
    _, grads["front.w"], grads["front.b"] = layers.conv2d_backward(dh, cache["front_conv"])
    return grads


def _pad_gradients(grad_logits, shape: Tuple[int, int, int]) -> np.ndarray:
    if isinstance(grad_logits, np.ndarray) and grad_logits.ndim == 3:
        if grad_logits.shape != shape:
            raise ConfigurationError(f"gradient shape {grad_logits.shape} does not match output {shape}")
        return grad_logits
    padded = np.zeros(shape)
    if len(grad_logits) != shape[0]:
        raise ConfigurationError(f"{len(grad_logits)} gradients for a batch of {shape[0]}")
    for b, g in enumerate(grad_logits):
        if g is not None:
            padded[b, :g.shape[0]] = g
    return padded


def predict_lattices(
    features: Sequence[Union[Spectrogram, np.ndarray]],
    params: Params,
    state: Params,
    config: ModelConfig,
    batch_size: int = 16,
) -> List[np.ndarray]:
    """Eval-mode lattices, one [T_b, C] array per utterance in input order"""
    lattices: List[np.ndarray] = []
    for start in range(0, len(features), batch_size):
        output = model_forward(features[start:start + batch_size], params, state, config, mode=EVAL)
        lattices.extend(output.lattices())
    return lattices
