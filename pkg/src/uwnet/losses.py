"""Training objective: pixel MSE plus feature-space perceptual distance.

The perceptual term runs both images through a frozen convolutional feature
extractor and takes the mean squared distance between the feature maps taken
at the last conv layer's post-activation output. The extractor is pluggable:
a plain-text manifest describes the layer stack and a weight file (same
container format as the model) supplies frozen weights. An empty manifest is
the identity extractor, under which the perceptual term degenerates to MSE.

Manifest grammar, one layer per line (blank lines and #-comments ignored):

    conv <in_channels> <out_channels> <kernel>
    relu
    maxpool

The bundled default manifest mirrors a 19-layer VGG-style conv trunk
(16 convs, 5 pools); pretrained weights are not shipped, so using it requires
a weight file with tensors "f0", "f0.bias", "f1", ... numbered by conv order.

Both images are fed to the extractor in the raw [0, 1] pixel domain, with no
channel normalization; reports record this assumption.
"""

from dataclasses import dataclass

import numpy as np

from . import ops, weights
from .ops import ConvParams, ShapeMismatchError


class NonFiniteLossError(RuntimeError):
    """A loss term left the finite range; carries the offending term."""

    def __init__(self, term: str, value, step=None):
        self.term = term
        self.value = value
        self.step = step
        at = f" at step {step}" if step is not None else ""
        super().__init__(f"non-finite loss term {term}={value}{at}")


class ExtractorWeightsError(RuntimeError):
    pass


@dataclass(frozen=True)
class LossReport:
    l_mse: float
    l_vgg: float
    l_total: float


def mse_loss(estimate: np.ndarray, reference: np.ndarray) -> float:
    if estimate.shape != reference.shape:
        raise ShapeMismatchError("mse input shapes", reference.shape, estimate.shape)
    diff = estimate.astype(np.float64) - reference.astype(np.float64)
    return float(np.mean(diff * diff))


def mse_grad(estimate: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """d mean((e - r)^2) / d estimate."""
    return (2.0 / estimate.size) * (estimate - reference)


# ---------------------------------------------------------------------------
# feature extractor

# (kind, payload): ("conv", (c_in, c_out, k)) | ("relu", None) | ("maxpool", None)
def parse_manifest(text: str) -> list:
    layers = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "conv":
            if len(parts) != 4:
                raise ValueError(f"manifest line {lineno}: conv wants 'conv C_in C_out k'")
            try:
                c_in, c_out, k = (int(p) for p in parts[1:])
            except ValueError:
                raise ValueError(
                    f"manifest line {lineno}: non-numeric conv dims {parts[1:]}"
                ) from None
            if c_in < 1 or c_out < 1 or k < 1 or k % 2 == 0:
                raise ValueError(f"manifest line {lineno}: bad conv dims {parts[1:]}")
            layers.append(("conv", (c_in, c_out, k)))
        elif parts[0] in ("relu", "maxpool"):
            if len(parts) != 1:
                raise ValueError(f"manifest line {lineno}: {parts[0]} takes no arguments")
            layers.append((parts[0], None))
        else:
            raise ValueError(f"manifest line {lineno}: unknown layer {parts[0]!r}")
    return layers


def default_manifest_text() -> str:
    """19-layer-VGG-style conv trunk: 16 convs in 5 stages, pooled between stages."""
    stages = [(3, 64, 2), (64, 128, 2), (128, 256, 4), (256, 512, 4), (512, 512, 4)]
    lines = []
    for c_in, c_out, n_convs in stages:
        for i in range(n_convs):
            lines.append(f"conv {c_in if i == 0 else c_out} {c_out} 3")
            lines.append("relu")
        lines.append("maxpool")
    return "\n".join(lines) + "\n"


class FeatureExtractor:
    """Frozen layer stack; features are tapped after the last conv's ReLU.

    Layers listed after that tap point (a trailing pool, say) are parsed but
    never executed. An empty layer list passes the input straight through.
    """

    def __init__(self, layers: list, conv_params: list):
        n_convs = sum(1 for kind, _ in layers if kind == "conv")
        if len(conv_params) != n_convs:
            raise ExtractorWeightsError(
                f"extractor has {n_convs} conv layers but {len(conv_params)} weight sets; "
                "load matching weights or use the identity extractor"
            )
        for (kind, spec), p in zip(
            ((k, s) for k, s in layers if k == "conv"), conv_params
        ):
            c_in, c_out, k = spec
            if p.weight.shape != (c_out, c_in, k, k):
                raise ExtractorWeightsError(
                    f"extractor conv expects weight {(c_out, c_in, k, k)}, got {p.weight.shape}"
                )
        self.layers = list(layers)
        self.conv_params = list(conv_params)
        # index of the layer to stop after: last conv, plus its relu if adjacent
        stop = None
        for i, (kind, _) in enumerate(self.layers):
            if kind == "conv":
                stop = i
        if stop is not None and stop + 1 < len(self.layers) and self.layers[stop + 1][0] == "relu":
            stop += 1
        self._stop = stop

    @classmethod
    def identity(cls) -> "FeatureExtractor":
        return cls([], [])

    @classmethod
    def random(cls, layers, seed=0) -> "FeatureExtractor":
        """Random frozen weights (Kaiming-uniform, zero bias); for tests and demos."""
        if isinstance(layers, str):
            layers = parse_manifest(layers)
        rng = np.random.default_rng(seed)
        conv_params = []
        for kind, spec in layers:
            if kind != "conv":
                continue
            c_in, c_out, k = spec
            bound = np.sqrt(6.0 / (c_in * k * k))
            w = rng.uniform(-bound, bound, size=(c_out, c_in, k, k)).astype(np.float32)
            conv_params.append(ConvParams(w, np.zeros(c_out, dtype=np.float32)))
        return cls(layers, conv_params)

    @classmethod
    def from_files(cls, manifest_path, weights_path) -> "FeatureExtractor":
        with open(manifest_path, "r", encoding="utf-8") as fh:
            layers = parse_manifest(fh.read())
        if weights_path is None:
            raise ExtractorWeightsError(
                "extractor weights missing: pass a weight file for the manifest "
                "or use the identity extractor"
            )
        with open(weights_path, "rb") as fh:
            tensors = weights.read_tensors(fh.read())
        conv_params = []
        idx = 0
        for kind, _ in layers:
            if kind != "conv":
                continue
            wname, bname = f"f{idx}", f"f{idx}.bias"
            if wname not in tensors or bname not in tensors:
                raise ExtractorWeightsError(
                    f"extractor weights missing tensor {wname!r}/{bname!r}; "
                    "load matching weights or use the identity extractor"
                )
            conv_params.append(ConvParams(tensors[wname], tensors[bname]))
            idx += 1
        return cls(layers, conv_params)

    def save_weights(self) -> bytes:
        named = []
        for i, p in enumerate(self.conv_params):
            named.append((f"f{i}", p.weight))
            named.append((f"f{i}.bias", p.bias))
        return weights.write_tensors(named)

    def _executed(self):
        if self._stop is None:
            return []
        return self.layers[: self._stop + 1]

    def features(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.features_with_cache(x, want_cache=False)
        return out

    def features_with_cache(self, x: np.ndarray, want_cache: bool = True):
        ops.require_nchw(x, "extractor input")
        cache = [] if want_cache else None
        conv_idx = 0
        for kind, _ in self._executed():
            if kind == "conv":
                p = self.conv_params[conv_idx]
                conv_idx += 1
                if cache is not None:
                    cache.append(("conv", p, x))
                x = ops.conv2d_forward(x, p)
            elif kind == "relu":
                if cache is not None:
                    cache.append(("relu", x))
                x = ops.relu(x)
            else:
                in_shape = x.shape
                x, idx = ops.maxpool2x2_forward(x)
                if cache is not None:
                    cache.append(("maxpool", idx, in_shape))
        return x, cache

    def input_grad(self, cache: list, grad_out: np.ndarray) -> np.ndarray:
        """Backward through the executed stack; weights stay frozen."""
        g = grad_out
        for entry in reversed(cache or []):
            kind = entry[0]
            if kind == "conv":
                _, p, x_in = entry
                g = ops.conv2d_input_grad(p, g)
            elif kind == "relu":
                g = ops.relu_backward(entry[1], g)
            else:
                _, idx, in_shape = entry
                g = ops.maxpool2x2_backward(in_shape, idx, g)
        return g


def perceptual_loss(estimate: np.ndarray, reference: np.ndarray, extractor: FeatureExtractor) -> float:
    if estimate.shape != reference.shape:
        raise ShapeMismatchError("perceptual input shapes", reference.shape, estimate.shape)
    fe = extractor.features(estimate)
    fr = extractor.features(reference)
    diff = fe.astype(np.float64) - fr.astype(np.float64)
    return float(np.mean(diff * diff))


def total_loss(estimate: np.ndarray, reference: np.ndarray, extractor: FeatureExtractor) -> LossReport:
    l_mse = mse_loss(estimate, reference)
    l_vgg = perceptual_loss(estimate, reference, extractor)
    return LossReport(l_mse=l_mse, l_vgg=l_vgg, l_total=l_mse + l_vgg)


def total_loss_with_grad(estimate, reference, extractor: FeatureExtractor):
    """Returns (LossReport, d l_total / d estimate)."""
    if estimate.shape != reference.shape:
        raise ShapeMismatchError("loss input shapes", reference.shape, estimate.shape)
    l_mse = mse_loss(estimate, reference)
    grad = mse_grad(estimate, reference)

    fe, cache = extractor.features_with_cache(estimate)
    fr = extractor.features(reference)
    fdiff = fe.astype(np.float64) - fr.astype(np.float64)
    l_vgg = float(np.mean(fdiff * fdiff))
    gfeat = ((2.0 / fe.size) * fdiff).astype(estimate.dtype, copy=False)
    grad = grad + extractor.input_grad(cache, gfeat)

    report = LossReport(l_mse=l_mse, l_vgg=l_vgg, l_total=l_mse + l_vgg)
    return report, grad


def make_total_loss(extractor: FeatureExtractor):
    """Loss callable for train_step: (estimate, reference) -> (LossReport, grad)."""

    def loss_fn(estimate, reference):
        return total_loss_with_grad(estimate, reference, extractor)

    return loss_fn
