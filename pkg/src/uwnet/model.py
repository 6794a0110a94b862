"""The shallow enhancement network: construction, forward, training, serialization.

Wiring: a head conv (3 -> F) with ReLU feeds a series of blocks. Each block
runs two conv(F -> F) + dropout + ReLU stages, concatenates the raw input
image onto the features (F + 3 channels), and closes with a conv(F+3 -> F) +
ReLU pair that folds the skip back to F channels. A final conv (F -> 3)
produces the enhanced image. All convs are 3x3, stride 1, zero-padded, so
the network is fully convolutional and output dims always equal input dims.

The backward pass is hand-scheduled over the cache recorded by the forward
pass; there is no generic autodiff here.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import ops, weights
from .ops import AdamState, ConvParams, GradPair, ShapeMismatchError


@dataclass(frozen=True)
class NetworkConfig:
    input_channels: int = 3
    feature_maps: int = 64
    num_blocks: int = 3
    kernel_size: int = 3
    dropout_rate: float = 0.2

    def __post_init__(self):
        if self.num_blocks < 1:
            raise ValueError(f"num_blocks must be >= 1, got {self.num_blocks}")
        if self.feature_maps < 1:
            raise ValueError(f"feature_maps must be >= 1, got {self.feature_maps}")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ValueError(f"kernel_size must be odd, got {self.kernel_size}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    def layer_plan(self) -> list:
        """Canonical (name, in_channels, out_channels) list, in forward order."""
        c_in, f = self.input_channels, self.feature_maps
        plan = [("head.conv", c_in, f)]
        for b in range(1, self.num_blocks + 1):
            plan.append((f"block{b}.conv1", f, f))
            plan.append((f"block{b}.conv2", f, f))
            plan.append((f"block{b}.conv3", f + c_in, f))
        plan.append(("final.conv", f, c_in))
        return plan


@dataclass
class ParameterStore:
    """Ordered, uniquely named conv layers plus the config that shaped them."""

    config: NetworkConfig
    layers: dict  # name -> ConvParams, canonical order

    def astype(self, dtype) -> "ParameterStore":
        return ParameterStore(self.config, {n: p.astype(dtype) for n, p in self.layers.items()})


def build_network(config: NetworkConfig, init_seed=0) -> ParameterStore:
    """Allocate and initialize all layers (Kaiming-uniform fan-in, zero biases)."""
    rng = np.random.default_rng(init_seed)
    k = config.kernel_size
    layers = {}
    for name, c_in, c_out in config.layer_plan():
        bound = np.sqrt(6.0 / (c_in * k * k))
        weight = rng.uniform(-bound, bound, size=(c_out, c_in, k, k)).astype(np.float32)
        bias = np.zeros(c_out, dtype=np.float32)
        layers[name] = ConvParams(weight, bias)
    return ParameterStore(config, layers)


def count_parameters(store: ParameterStore):
    """Per-layer C_in * C_out * k^2 + C_out breakdown and its total."""
    rows = []
    total = 0
    for name, p in store.layers.items():
        c_out, c_in, k, _ = p.weight.shape
        n = c_in * c_out * k * k + c_out
        rows.append({"layer": name, "in_channels": c_in, "out_channels": c_out, "kernel": k, "params": n})
        total += n
    return total, rows


def _dropout_seed(base_seed, index: int):
    # distinct deterministic stream per dropout site; base may be an int or a
    # tuple of ints (the trainer passes (run_seed, step))
    base = base_seed if isinstance(base_seed, tuple) else (base_seed,)
    return np.random.SeedSequence([int(b) for b in base] + [int(index)])


def _run_forward(store: ParameterStore, image: np.ndarray, train: bool, seed, cache):
    cfg = store.config
    ops.require_nchw(image, "network input")
    if image.shape[1] != cfg.input_channels:
        raise ShapeMismatchError("network input channels", cfg.input_channels, image.shape[1])
    if image.shape[2] < cfg.kernel_size or image.shape[3] < cfg.kernel_size:
        raise ShapeMismatchError(
            "network input size", f">= {cfg.kernel_size} x {cfg.kernel_size}", image.shape[2:]
        )

    def conv(name, x):
        out = ops.conv2d_forward(x, store.layers[name])
        if cache is not None:
            cache.append(("conv", name, x))
        return out

    def act(x):
        out = ops.relu(x)
        if cache is not None:
            cache.append(("relu", x))
        return out

    drop_count = 0

    def drop(x):
        nonlocal drop_count
        out, mask = ops.dropout(x, cfg.dropout_rate, train, _dropout_seed(seed, drop_count))
        drop_count += 1
        if cache is not None:
            cache.append(("dropout", mask))
        return out

    x = act(conv("head.conv", image))
    for b in range(1, cfg.num_blocks + 1):
        x = act(drop(conv(f"block{b}.conv1", x)))
        x = act(drop(conv(f"block{b}.conv2", x)))
        x = ops.concat_channels(x, image)
        if cache is not None:
            cache.append(("concat", cfg.feature_maps))
        x = act(conv(f"block{b}.conv3", x))
    return conv("final.conv", x)


def forward(store: ParameterStore, image: np.ndarray, mode: str = "infer", seed=0) -> np.ndarray:
    """Run the network. mode "infer" is deterministic; "train" applies dropout.

    Output values are not clamped here; clamping to [0, 1] happens only at
    the 8-bit export boundary.
    """
    if mode not in ("infer", "train"):
        raise ValueError(f"mode must be 'infer' or 'train', got {mode!r}")
    return _run_forward(store, image, mode == "train", seed, cache=None)


def forward_with_cache(store: ParameterStore, image: np.ndarray, train: bool, seed=0):
    """Forward pass recording everything backward() needs. Returns (output, cache)."""
    cache = []
    out = _run_forward(store, image, train, seed, cache)
    return out, cache


def backward(store: ParameterStore, cache: list, grad_out: np.ndarray) -> dict:
    """Walk the recorded tape in reverse. Returns {layer name: (grad_w, grad_b)}.

    Gradient flowing into the raw image (through the head conv and the skip
    concatenations) is discarded; the image is data, not a parameter.
    """
    cfg = store.config
    grads = {}
    g = grad_out
    for entry in reversed(cache):
        kind = entry[0]
        if kind == "conv":
            _, name, x = entry
            g, gw, gb = ops.conv2d_backward(x, store.layers[name], g)
            grads[name] = (gw, gb)
        elif kind == "relu":
            g = ops.relu_backward(entry[1], g)
        elif kind == "dropout":
            g = ops.dropout_backward(g, entry[1], cfg.dropout_rate)
        elif kind == "concat":
            g, _ = ops.split_channels(g, entry[1])
        else:
            raise AssertionError(f"unknown cache entry {kind!r}")
    return grads


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainState:
    params: ParameterStore
    adam: dict  # tensor name ("<layer>" / "<layer>.bias") -> AdamState
    epoch: int = 0
    step: int = 0
    seed: int = 0
    lr: float = 2e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8


def init_train_state(config: NetworkConfig, seed: int = 0, lr: float = 2e-4) -> TrainState:
    params = build_network(config, init_seed=seed)
    adam = {}
    for name, p in params.layers.items():
        adam[name] = ops.adam_init(p.weight)
        adam[name + ".bias"] = ops.adam_init(p.bias)
    return TrainState(params=params, adam=adam, seed=seed, lr=lr)


def train_step(state: TrainState, batch: tuple, loss_fn) -> tuple:
    """One optimization step on a (raw, reference) pair.

    loss_fn(estimate, reference) must return (LossReport, grad_wrt_estimate).
    Returns (new TrainState, LossReport). Raises NonFiniteLossError (from the
    loss module) if any loss term leaves the finite range.
    """
    from .losses import NonFiniteLossError

    raw, ref = batch
    if raw.shape != ref.shape:
        raise ShapeMismatchError("batch raw/reference shapes", raw.shape, ref.shape)
    est, cache = forward_with_cache(
        state.params, raw, train=True, seed=(state.seed, state.step)
    )
    report, grad_est = loss_fn(est, ref)
    for term in ("l_mse", "l_vgg", "l_total"):
        value = getattr(report, term)
        if not np.isfinite(value):
            raise NonFiniteLossError(term, value, step=state.step)

    grads = backward(state.params, cache, grad_est)
    new_layers = {}
    new_adam = {}
    for name, p in state.params.layers.items():
        gw, gb = grads[name]
        w, sw = ops.adam_step(
            GradPair(p.weight, gw), state.adam[name], state.lr, *state.betas, state.eps
        )
        b, sb = ops.adam_step(
            GradPair(p.bias, gb), state.adam[name + ".bias"], state.lr, *state.betas, state.eps
        )
        new_layers[name] = ConvParams(w, b)
        new_adam[name] = sw
        new_adam[name + ".bias"] = sb
    new_state = replace(
        state,
        params=ParameterStore(state.params.config, new_layers),
        adam=new_adam,
        step=state.step + 1,
    )
    return new_state, report


# ---------------------------------------------------------------------------
# serialization


def save_weights(store: ParameterStore) -> bytes:
    named = []
    for name, p in store.layers.items():
        named.append((name, p.weight))
        named.append((name + ".bias", p.bias))
    return weights.write_tensors(named)


def load_weights(data: bytes) -> ParameterStore:
    """Rebuild a ParameterStore, validating the canonical layer structure."""
    tensors = weights.read_tensors(data)
    layer_names = [n for n in tensors if not n.endswith(".bias")]
    if "head.conv" not in layer_names or "final.conv" not in layer_names:
        raise weights.WeightsFormatError("missing head.conv or final.conv layer")
    num_blocks = sum(1 for n in layer_names if n.endswith(".conv1"))
    head = tensors["head.conv"]
    if head.ndim != 4:
        raise weights.WeightsFormatError("head.conv weight is not 4-d")
    config = NetworkConfig(
        input_channels=head.shape[1],
        feature_maps=head.shape[0],
        num_blocks=max(num_blocks, 1),
        kernel_size=head.shape[2],
    )
    layers = {}
    for name, c_in, c_out in config.layer_plan():
        if name not in tensors:
            raise weights.WeightsFormatError(f"missing weight tensor {name!r}")
        w = tensors[name]
        bias_name = name + ".bias"
        if bias_name not in tensors:
            raise weights.WeightsFormatError(f"missing bias tensor {bias_name!r}")
        b = tensors[bias_name]
        if w.shape != (c_out, c_in, config.kernel_size, config.kernel_size):
            raise weights.WeightsFormatError(
                f"{name!r} has shape {w.shape}, expected "
                f"{(c_out, c_in, config.kernel_size, config.kernel_size)}"
            )
        if b.shape != (c_out,):
            raise weights.WeightsFormatError(f"{bias_name!r} has shape {b.shape}, expected {(c_out,)}")
        layers[name] = ConvParams(w, b)
    expected = len(layers) * 2
    if len(tensors) != expected:
        extra = set(tensors) - {n for name in layers for n in (name, name + ".bias")}
        raise weights.WeightsFormatError(f"unexpected tensors in file: {sorted(extra)}")
    return ParameterStore(config, layers)
