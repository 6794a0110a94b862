"""Dense NCHW tensor kernels with explicit forward and backward passes.

Everything operates on plain numpy arrays laid out as (batch, channels,
height, width). float32 is the working precision; feeding float64 arrays
switches an entire pipeline to double precision, which the gradient-check
tests rely on. All functions are pure: inputs are never mutated, and dropout
randomness comes from an explicit seed, so evaluating different images on
different workers is safe without locks.

Conventions (fixed so weight files are unambiguous):
  * conv2d is cross-correlation, no kernel flip
  * stride 1, zero padding of (k - 1) / 2, so spatial dims are preserved
  * dropout is inverted: survivors are scaled by 1 / (1 - rate) at train
    time and inference is the identity
  * ReLU subgradient at exactly 0 is 0
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeMismatchError(ValueError):
    """Raised when tensor shapes violate an operation's contract."""

    def __init__(self, what: str, expected, actual):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected {expected}, got {actual}")


def require_nchw(x: np.ndarray, what: str = "tensor") -> None:
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        actual = getattr(x, "shape", type(x))
        raise ShapeMismatchError(f"{what} rank", "4-d (N, C, H, W)", actual)


@dataclass(frozen=True)
class ConvParams:
    """Weights of one same-size convolution: weight (C_out, C_in, k, k), bias (C_out,)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weight.ndim != 4:
            raise ShapeMismatchError("conv weight rank", "4-d", self.weight.shape)
        c_out, _, kh, kw = self.weight.shape
        if kh != kw or kh % 2 == 0:
            raise ShapeMismatchError("conv kernel", "square with odd size", (kh, kw))
        if self.bias.shape != (c_out,):
            raise ShapeMismatchError("conv bias shape", (c_out,), self.bias.shape)

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[2]

    @property
    def padding(self) -> int:
        return (self.kernel_size - 1) // 2

    def astype(self, dtype) -> "ConvParams":
        return ConvParams(self.weight.astype(dtype), self.bias.astype(dtype))


@dataclass
class GradPair:
    """A parameter tensor together with its accumulated cotangent."""

    value: np.ndarray
    grad: np.ndarray

    def __post_init__(self):
        if self.grad.shape != self.value.shape:
            raise ShapeMismatchError("grad shape", self.value.shape, self.grad.shape)


@dataclass
class AdamState:
    """First/second moment estimates and the step counter for one parameter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0


def _padded_windows(x: np.ndarray, k: int) -> np.ndarray:
    """All k x k windows of the zero-padded input, shape (N, C, H, W, k, k)."""
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    return sliding_window_view(xp, (k, k), axis=(2, 3))


def conv2d_forward(x: np.ndarray, params: ConvParams) -> np.ndarray:
    """Same-size cross-correlation plus bias: (N, C_in, H, W) -> (N, C_out, H, W)."""
    require_nchw(x, "conv input")
    if x.shape[1] != params.in_channels:
        raise ShapeMismatchError("conv input channels", params.in_channels, x.shape[1])
    win = _padded_windows(x, params.kernel_size)
    # im2col contraction over (C_in, k, k); one GEMM under the hood
    out = np.tensordot(win, params.weight, axes=((1, 4, 5), (1, 2, 3)))
    out += params.bias
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_input_grad(params: ConvParams, grad_out: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the conv input; needs only the weights, not the input."""
    require_nchw(grad_out, "conv grad_out")
    if grad_out.shape[1] != params.out_channels:
        raise ShapeMismatchError("conv grad_out channels", params.out_channels, grad_out.shape[1])
    # correlate grad_out with the spatially flipped, channel-swapped kernel
    flipped = np.ascontiguousarray(params.weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    zero_bias = np.zeros(params.in_channels, dtype=flipped.dtype)
    return conv2d_forward(grad_out, ConvParams(flipped, zero_bias))


def conv2d_backward(x: np.ndarray, params: ConvParams, grad_out: np.ndarray):
    """Gradients of a scalar loss through conv2d_forward.

    Returns (grad_input, grad_weight, grad_bias) matching the shapes of
    (x, params.weight, params.bias).
    """
    require_nchw(x, "conv input")
    expected = (x.shape[0], params.out_channels, x.shape[2], x.shape[3])
    if grad_out.shape != expected:
        raise ShapeMismatchError("conv grad_out shape", expected, grad_out.shape)
    win = _padded_windows(x, params.kernel_size)
    grad_weight = np.tensordot(grad_out, win, axes=((0, 2, 3), (0, 2, 3)))
    grad_bias = grad_out.sum(axis=(0, 2, 3))
    grad_input = conv2d_input_grad(params, grad_out)
    return grad_input, grad_weight, grad_bias


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    if grad_out.shape != x.shape:
        raise ShapeMismatchError("relu grad_out shape", x.shape, grad_out.shape)
    return np.where(x > 0, grad_out, 0)


def dropout(x: np.ndarray, rate: float, training: bool, rng_seed) -> tuple:
    """Inverted dropout. Returns (output, keep_mask).

    In training mode each element is zeroed independently with probability
    `rate` and survivors are scaled by 1 / (1 - rate). In inference mode the
    input is returned untouched and the mask is None.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    rng = np.random.default_rng(rng_seed)
    keep = rng.random(x.shape) >= rate
    scale = np.asarray(1.0 / (1.0 - rate), dtype=x.dtype)
    return np.where(keep, x * scale, 0).astype(x.dtype, copy=False), keep


def dropout_backward(grad_out: np.ndarray, keep_mask, rate: float) -> np.ndarray:
    """Backward of dropout: same mask, same scale. keep_mask None means identity."""
    if keep_mask is None:
        return grad_out
    scale = np.asarray(1.0 / (1.0 - rate), dtype=grad_out.dtype)
    return np.where(keep_mask, grad_out * scale, 0).astype(grad_out.dtype, copy=False)


def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Channel-wise concatenation, a's channels first."""
    require_nchw(a, "concat lhs")
    require_nchw(b, "concat rhs")
    want = (a.shape[0],) + a.shape[2:]
    got = (b.shape[0],) + b.shape[2:]
    if want != got:
        raise ShapeMismatchError("concat batch/spatial dims", want, got)
    return np.concatenate([a, b], axis=1)


def split_channels(x: np.ndarray, first: int) -> tuple:
    """Inverse of concat_channels: split at channel boundary `first`."""
    require_nchw(x, "split input")
    if not 0 <= first <= x.shape[1]:
        raise ShapeMismatchError("split boundary", f"0..{x.shape[1]}", first)
    return x[:, :first], x[:, first:]


def maxpool2x2_forward(x: np.ndarray) -> tuple:
    """2x2 max pooling, stride 2, floor semantics for odd dims.

    Returns (output, argmax) where argmax holds each window's winning flat
    index (0..3), consumed by maxpool2x2_backward.
    """
    require_nchw(x, "maxpool input")
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    if h2 == 0 or w2 == 0:
        raise ShapeMismatchError("maxpool input size", "H >= 2 and W >= 2", (h, w))
    tiles = x[:, :, : 2 * h2, : 2 * w2].reshape(n, c, h2, 2, w2, 2)
    tiles = tiles.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    idx = tiles.argmax(axis=-1)
    out = np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2x2_backward(input_shape: tuple, argmax: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Routes grad_out to each window's argmax position; ties went to the first."""
    n, c, h, w = input_shape
    h2, w2 = h // 2, w // 2
    if grad_out.shape != (n, c, h2, w2):
        raise ShapeMismatchError("maxpool grad_out shape", (n, c, h2, w2), grad_out.shape)
    tiles = np.zeros((n, c, h2, w2, 4), dtype=grad_out.dtype)
    np.put_along_axis(tiles, argmax[..., None], grad_out[..., None], axis=-1)
    grad = np.zeros(input_shape, dtype=grad_out.dtype)
    grad[:, :, : 2 * h2, : 2 * w2] = (
        tiles.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
    )
    return grad


def adam_init(param: np.ndarray) -> AdamState:
    return AdamState(m=np.zeros_like(param), v=np.zeros_like(param), t=0)


def adam_step(
    pair: GradPair,
    state: AdamState,
    lr: float = 2e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple:
    """One bias-corrected Adam update. Returns (new_value, new_state)."""
    if state.m.shape != pair.value.shape or state.v.shape != pair.value.shape:
        raise ShapeMismatchError("adam state shape", pair.value.shape, (state.m.shape, state.v.shape))
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * pair.grad
    v = beta2 * state.v + (1.0 - beta2) * pair.grad**2
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    value = pair.value - lr * m_hat / (np.sqrt(v_hat) + eps)
    return value.astype(pair.value.dtype, copy=False), AdamState(m=m, v=v, t=t)
