"""
Layer primitives for the acoustic model

Every op is a function pair: ``*_forward`` returns the output and a cache,
``*_backward`` maps the output gradient and that cache to input and parameter
gradients. Convolution inputs are laid out [batch, channels, freq, time],
recurrent inputs [time, batch, features]. Everything runs in float64.
"""
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from app.exceptions import ConfigurationError

TRAIN = "train"
EVAL = "eval"

IntPair = Union[int, Tuple[int, int]]


def _pair(value: IntPair) -> Tuple[int, int]:
    if isinstance(value, (int, np.integer)):
        return int(value), int(value)
    return int(value[0]), int(value[1])


def conv_output_size(size: int, filter_size: int, stride: int, padding: int = 0) -> int:
    return (size + 2 * padding - filter_size) // stride + 1


def _check_conv_input(x: np.ndarray, in_channels: int, kh: int, kw: int, padding: Tuple[int, int]) -> None:
    if x.ndim != 4:
        raise ConfigurationError(f"expected a [batch, channels, freq, time] input, got shape {x.shape}")
    if x.shape[1] != in_channels:
        raise ConfigurationError(f"input has {x.shape[1]} channels, filter expects {in_channels}")
    if x.shape[2] + 2 * padding[0] < kh or x.shape[3] + 2 * padding[1] < kw:
        raise ConfigurationError(
            f"input of size {x.shape[2]}x{x.shape[3]} (padding {padding}) is smaller than the {kh}x{kw} filter"
        )


def _pad(x: np.ndarray, padding: Tuple[int, int]) -> np.ndarray:
    ph, pw = padding
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def _unpad(x: np.ndarray, padding: Tuple[int, int]) -> np.ndarray:
    ph, pw = padding
    return x[:, :, ph:x.shape[2] - ph, pw:x.shape[3] - pw]


def _window(xp: np.ndarray, i: int, j: int, stride: Tuple[int, int], out_h: int, out_w: int) -> np.ndarray:
    """View of the inputs that kernel offset (i, j) touches, one per output position"""
    sh, sw = stride
    return xp[:, :, i:i + sh * (out_h - 1) + 1:sh, j:j + sw * (out_w - 1) + 1:sw]


def conv2d_forward(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray,
    stride: IntPair = 1,
    padding: IntPair = 0,
):
    """
    Cross-correlation of x [B, Cin, H, W] with w [Cout, Cin, kh, kw]

    Output size per axis is floor((in + 2 * pad - filter) / stride) + 1.
    Accumulates one einsum per kernel offset so no im2col buffer is built.
    """
    stride, padding = _pair(stride), _pair(padding)
    cout, cin, kh, kw = w.shape
    _check_conv_input(x, cin, kh, kw, padding)
    xp = _pad(x, padding)
    out_h = conv_output_size(x.shape[2], kh, stride[0], padding[0])
    out_w = conv_output_size(x.shape[3], kw, stride[1], padding[1])

    out = np.zeros((x.shape[0], cout, out_h, out_w))
    for i in range(kh):
        for j in range(kw):
            out += np.einsum("bchw,oc->bohw", _window(xp, i, j, stride, out_h, out_w), w[:, :, i, j])
    out += b[None, :, None, None]
    return out, (xp, w, stride, padding)


def conv2d_backward(dout: np.ndarray, cache):
    """Returns (dx, dw, db)"""
    xp, w, stride, padding = cache
    _, _, kh, kw = w.shape
    out_h, out_w = dout.shape[2:]
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            dw[:, :, i, j] = np.einsum("bohw,bchw->oc", dout, _window(xp, i, j, stride, out_h, out_w))
            target = _window(dxp, i, j, stride, out_h, out_w)
            target += np.einsum("bohw,oc->bchw", dout, w[:, :, i, j])
    return _unpad(dxp, padding), dw, dout.sum(axis=(0, 2, 3))


def depthwise_conv2d_forward(x: np.ndarray, w: np.ndarray, stride: IntPair = 1, padding: IntPair = 0):
    """Per-channel cross-correlation with w [C, kh, kw], no bias"""
    stride, padding = _pair(stride), _pair(padding)
    channels, kh, kw = w.shape
    _check_conv_input(x, channels, kh, kw, padding)
    xp = _pad(x, padding)
    out_h = conv_output_size(x.shape[2], kh, stride[0], padding[0])
    out_w = conv_output_size(x.shape[3], kw, stride[1], padding[1])

    out = np.zeros((x.shape[0], channels, out_h, out_w))
    for i in range(kh):
        for j in range(kw):
            out += _window(xp, i, j, stride, out_h, out_w) * w[None, :, i, j, None, None]
    return out, (xp, w, stride, padding)


def depthwise_conv2d_backward(dout: np.ndarray, cache):
    """Returns (dx, dw)"""
    xp, w, stride, padding = cache
    _, kh, kw = w.shape
    out_h, out_w = dout.shape[2:]
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            dw[:, i, j] = np.einsum("bchw,bchw->c", dout, _window(xp, i, j, stride, out_h, out_w))
            target = _window(dxp, i, j, stride, out_h, out_w)
            target += dout * w[None, :, i, j, None, None]
    return _unpad(dxp, padding), dw


def pointwise_conv_forward(x: np.ndarray, w: np.ndarray, b: Optional[np.ndarray] = None):
    """1x1 convolution with w [Cout, Cin]"""
    if x.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ConfigurationError(f"input of shape {x.shape} does not match 1x1 filter {w.shape}")
    out = np.einsum("bchw,oc->bohw", x, w)
    if b is not None:
        out = out + b[None, :, None, None]
    return out, (x, w, b is not None)


def pointwise_conv_backward(dout: np.ndarray, cache):
    """Returns (dx, dw, db); db is None for a bias-free layer"""
    x, w, has_bias = cache
    dx = np.einsum("bohw,oc->bchw", dout, w)
    dw = np.einsum("bohw,bchw->oc", dout, x)
    db = dout.sum(axis=(0, 2, 3)) if has_bias else None
    return dx, dw, db


def sepconv2d_forward(
    x: np.ndarray,
    w_depthwise: np.ndarray,
    w_pointwise: np.ndarray,
    b: np.ndarray,
    stride: IntPair = 1,
    padding: IntPair = 0,
):
    """
    Depthwise separable convolution

    The stride applies to the channel-wise stage only; the 1x1 mixing stage
    always runs at stride one and carries the single bias vector.
    """
    mid, depthwise_cache = depthwise_conv2d_forward(x, w_depthwise, stride, padding)
    out, pointwise_cache = pointwise_conv_forward(mid, w_pointwise, b)
    return out, (depthwise_cache, pointwise_cache)


def sepconv2d_backward(dout: np.ndarray, cache):
    """Returns (dx, dw_depthwise, dw_pointwise, db)"""
    depthwise_cache, pointwise_cache = cache
    dmid, dw_pointwise, db = pointwise_conv_backward(dout, pointwise_cache)
    dx, dw_depthwise = depthwise_conv2d_backward(dmid, depthwise_cache)
    return dx, dw_depthwise, dw_pointwise, db


def batchnorm_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: Optional[np.ndarray] = None,
    running_var: Optional[np.ndarray] = None,
    mode: str = TRAIN,
    axis: int = 1,
    mask: Optional[np.ndarray] = None,
    momentum: float = 0.9,
    eps: float = 1e-5,
    batch_axis: int = 0,
):
    """
    Batch normalization over every axis except ``axis``

    ``mask`` (broadcastable to x, 1 for valid positions) restricts the
    statistics to real frames and zeroes the padded outputs. In train mode
    the running statistics are updated in place:
    running = momentum * running + (1 - momentum) * batch.
    """
    if mode not in (TRAIN, EVAL):
        raise ConfigurationError(f"mode must be '{TRAIN}' or '{EVAL}', got {mode!r}")
    shape = [1] * x.ndim
    shape[axis] = -1
    reduce_axes = tuple(a for a in range(x.ndim) if a != axis)
    m = np.ones_like(x) if mask is None else np.broadcast_to(mask, x.shape).astype(np.float64)
    g = gamma.reshape(shape)
    be = beta.reshape(shape)

    if mode == EVAL:
        if running_mean is None or running_var is None:
            raise ConfigurationError("eval-mode batch norm needs running statistics")
        xhat = (x - running_mean.reshape(shape)) / np.sqrt(running_var.reshape(shape) + eps)
        return (g * xhat + be) * m, None

    if x.shape[batch_axis] < 2:
        raise ConfigurationError(f"train-mode batch norm needs a batch of at least 2, got {x.shape[batch_axis]}")
    count = m.sum(axis=reduce_axes, keepdims=True)
    if np.any(count == 0):
        raise ConfigurationError("batch norm statistics over zero valid positions")

    mean = (x * m).sum(axis=reduce_axes, keepdims=True) / count
    centered = (x - mean) * m
    var = (centered ** 2).sum(axis=reduce_axes, keepdims=True) / count
    std = np.sqrt(var + eps)
    xhat = centered / std

    if running_mean is not None:
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean.reshape(-1)
    if running_var is not None:
        running_var *= momentum
        running_var += (1.0 - momentum) * var.reshape(-1)

    return (g * xhat + be) * m, (xhat, std, g, m, count, reduce_axes)


def batchnorm_backward(dout: np.ndarray, cache):
    """Returns (dx, dgamma, dbeta)"""
    if cache is None:
        raise ConfigurationError("batch norm backward needs a train-mode forward cache")
    xhat, std, g, m, count, axes = cache
    dout = dout * m
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dxhat = dout * g
    dx = m * (
        dxhat
        - dxhat.sum(axis=axes, keepdims=True) / count
        - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True) / count
    ) / std
    return dx, dgamma, dbeta


def linear_forward(x: np.ndarray, w: np.ndarray, b: Optional[np.ndarray] = None):
    """x @ w.T (+ b) over the last axis; w is [out, in]"""
    if x.shape[-1] != w.shape[1]:
        raise ConfigurationError(f"input features {x.shape[-1]} do not match weight {w.shape}")
    out = x @ w.T
    if b is not None:
        out = out + b
    return out, (x, w, b is not None)


def linear_backward(dout: np.ndarray, cache):
    """Returns (dx, dw, db); db is None for a bias-free layer"""
    x, w, has_bias = cache
    flat_out = dout.reshape(-1, dout.shape[-1])
    dx = dout @ w
    dw = flat_out.T @ x.reshape(-1, x.shape[-1])
    db = flat_out.sum(axis=0) if has_bias else None
    return dx, dw, db


def relu_forward(x: np.ndarray):
    active = x > 0
    return np.where(active, x, 0.0), active


def relu_backward(dout: np.ndarray, cache) -> np.ndarray:
    return dout * cache


def time_mask(lengths: Sequence[int], num_steps: int) -> np.ndarray:
    """[num_steps, batch] mask, 1.0 where t < length"""
    lengths = np.asarray(lengths)
    return (np.arange(num_steps)[:, None] < lengths[None, :]).astype(np.float64)


def reverse_padded(x: np.ndarray, lengths: Sequence[int]) -> np.ndarray:
    """Reverse each sequence of a [T, B, ...] array within its own length; padding stays put"""
    lengths = np.asarray(lengths)
    steps = np.arange(x.shape[0])[:, None]
    index = np.where(steps < lengths[None, :], lengths[None, :] - 1 - steps, steps)
    return x[index, np.arange(x.shape[1])[None, :]]


def gru_recurrence_forward(
    a: np.ndarray,
    u: np.ndarray,
    b: np.ndarray,
    reverse: bool = False,
    lengths: Optional[Sequence[int]] = None,
):
    """
    GRU recurrence over precomputed input activations a [T, B, 3H]

    Gate blocks are ordered (update z, reset r, candidate):
        z = sigmoid(a_z + U_z h + b_z)
        r = sigmoid(a_r + U_r h + b_r)
        c = tanh(a_c + U_c (r * h) + b_c)
        h' = (1 - z) * h + z * c
    Steps past an utterance's length hold the state and emit zeros.
    ``reverse`` runs each sequence backwards within its own length.
    """
    T, B, three_h = a.shape
    H = three_h // 3
    if three_h != 3 * H or u.shape != (3 * H, H) or b.shape != (3 * H,):
        raise ConfigurationError(f"GRU shapes do not match: input {a.shape}, recurrent {u.shape}, bias {b.shape}")
    lengths = np.full(B, T) if lengths is None else np.asarray(lengths)
    mask = time_mask(lengths, T)[:, :, None]
    if reverse:
        a = reverse_padded(a, lengths)

    u_z, u_r, u_c = u[:H], u[H:2 * H], u[2 * H:]
    b_z, b_r, b_c = b[:H], b[H:2 * H], b[2 * H:]
    z_all = np.zeros((T, B, H))
    r_all = np.zeros((T, B, H))
    c_all = np.zeros((T, B, H))
    prev_all = np.zeros((T, B, H))
    out = np.zeros((T, B, H))

    h = np.zeros((B, H))
    for t in range(T):
        a_t = a[t]
        z = expit(a_t[:, :H] + h @ u_z.T + b_z)
        r = expit(a_t[:, H:2 * H] + h @ u_r.T + b_r)
        c = np.tanh(a_t[:, 2 * H:] + (r * h) @ u_c.T + b_c)
        h_new = (1.0 - z) * h + z * c
        m = mask[t]
        z_all[t], r_all[t], c_all[t], prev_all[t] = z, r, c, h
        out[t] = h_new * m
        h = m * h_new + (1.0 - m) * h

    if reverse:
        out = reverse_padded(out, lengths)
    cache = (u, mask, lengths, reverse, z_all, r_all, c_all, prev_all)
    return out, cache


def gru_recurrence_backward(dout: np.ndarray, cache):
    """Returns (da, du, db)"""
    u, mask, lengths, reverse, z_all, r_all, c_all, prev_all = cache
    T, B, H = z_all.shape
    if reverse:
        dout = reverse_padded(dout, lengths)
    u_z, u_r, u_c = u[:H], u[H:2 * H], u[2 * H:]

    da = np.zeros((T, B, 3 * H))
    du = np.zeros_like(u)
    dh_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        m = mask[t]
        z, r, c, h_prev = z_all[t], r_all[t], c_all[t], prev_all[t]
        d_new = m * (dout[t] + dh_next)
        dh_prev = (1.0 - m) * dh_next + d_new * (1.0 - z)

        dz = d_new * (c - h_prev)
        dc = d_new * z * (1.0 - c ** 2)
        du[2 * H:] += dc.T @ (r * h_prev)
        d_rh = dc @ u_c
        dr = d_rh * h_prev
        dh_prev += d_rh * r

        dz = dz * z * (1.0 - z)
        dr = dr * r * (1.0 - r)
        du[:H] += dz.T @ h_prev
        du[H:2 * H] += dr.T @ h_prev
        dh_prev += dz @ u_z + dr @ u_r

        da[t, :, :H] = dz
        da[t, :, H:2 * H] = dr
        da[t, :, 2 * H:] = dc
        dh_next = dh_prev

    db = da.sum(axis=(0, 1))
    if reverse:
        da = reverse_padded(da, lengths)
    return da, du, db


def gru_forward(
    x: np.ndarray,
    w: np.ndarray,
    u: np.ndarray,
    b: np.ndarray,
    reverse: bool = False,
    lengths: Optional[Sequence[int]] = None,
):
    """Single-direction GRU over x [T, B, in] with input weights w [3H, in]"""
    if x.shape[0] < 1:
        raise ConfigurationError("GRU input needs at least one time step")
    a, linear_cache = linear_forward(x, w)
    out, recurrence_cache = gru_recurrence_forward(a, u, b, reverse, lengths)
    return out, (linear_cache, recurrence_cache)


def gru_backward(dout: np.ndarray, cache):
    """Returns (dx, dw, du, db)"""
    linear_cache, recurrence_cache = cache
    da, du, db = gru_recurrence_backward(dout, recurrence_cache)
    dx, dw, _ = linear_backward(da, linear_cache)
    return dx, dw, du, db


def bigru_forward(x: np.ndarray, forward_weights, backward_weights, lengths: Optional[Sequence[int]] = None):
    """
    Bidirectional GRU: [forward outputs, time-reversed backward outputs]
    concatenated on the feature axis. Each weight set is (w, u, b).
    """
    h_fwd, fwd_cache = gru_forward(x, *forward_weights, reverse=False, lengths=lengths)
    h_bwd, bwd_cache = gru_forward(x, *backward_weights, reverse=True, lengths=lengths)
    return np.concatenate([h_fwd, h_bwd], axis=-1), (fwd_cache, bwd_cache, h_fwd.shape[-1])


def bigru_backward(dout: np.ndarray, cache):
    """Returns (dx, forward (dw, du, db), backward (dw, du, db))"""
    fwd_cache, bwd_cache, hidden = cache
    dx_fwd, *fwd_grads = gru_backward(dout[..., :hidden], fwd_cache)
    dx_bwd, *bwd_grads = gru_backward(dout[..., hidden:], bwd_cache)
    return dx_fwd + dx_bwd, tuple(fwd_grads), tuple(bwd_grads)
