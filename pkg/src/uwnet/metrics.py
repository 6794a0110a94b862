"""Image quality metrics and model compression rates.

Full-reference metrics (PSNR, SSIM) and the no-reference underwater quality
measure built from colorfulness (UICM), sharpness (UISM), and contrast
(UIConM) sub-scores. All metric math runs in the 8-bit 0..255 domain on
channel-last (H, W) or (H, W, C) float arrays, matching what exported image
files actually contain; [0, 1] network tensors are scaled by 255 first.

Also here: the parameter-count and latency ratios used by the compression
benchmark, in both the plain ratio and the ratio-minus-one convention, plus
mean/sample-std aggregation for report rows.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .ops import ShapeMismatchError


def tensor_to_image(t: np.ndarray) -> np.ndarray:
    """(1, C, H, W) tensor in [0, 1] -> (H, W, C) float image in 0..255."""
    if t.ndim != 4 or t.shape[0] != 1:
        raise ShapeMismatchError("image tensor shape", "(1, C, H, W)", t.shape)
    return np.ascontiguousarray(t[0].transpose(1, 2, 0).astype(np.float64) * 255.0)


# ---------------------------------------------------------------------------
# full-reference metrics


def psnr(estimate: np.ndarray, reference: np.ndarray, peak: float = 255.0) -> float:
    """10 * log10(peak^2 / MSE) in dB; identical images give math.inf."""
    if estimate.shape != reference.shape:
        raise ShapeMismatchError("psnr input shapes", reference.shape, estimate.shape)
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    diff = estimate.astype(np.float64) - reference.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


def ssim(
    estimate: np.ndarray,
    reference: np.ndarray,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    peak: float = 255.0,
) -> float:
    """Mean structural similarity over valid Gaussian-weighted windows.

    Color inputs are scored per channel and averaged. Requires
    min(H, W) >= window.
    """
    if estimate.shape != reference.shape:
        raise ShapeMismatchError("ssim input shapes", reference.shape, estimate.shape)
    if estimate.ndim == 2:
        channels = [(estimate, reference)]
    elif estimate.ndim == 3:
        channels = [(estimate[..., c], reference[..., c]) for c in range(estimate.shape[-1])]
    else:
        raise ShapeMismatchError("ssim input rank", "(H, W) or (H, W, C)", estimate.shape)
    h, w = channels[0][0].shape
    if min(h, w) < window:
        raise ShapeMismatchError("ssim image size", f">= {window} x {window}", (h, w))

    kern = gaussian_window(window, sigma)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2

    def windowed_mean(img):
        win = sliding_window_view(img, (window, window))
        return np.tensordot(win, kern, axes=((2, 3), (0, 1)))

    scores = []
    for x, y in channels:
        x = x.astype(np.float64)
        y = y.astype(np.float64)
        mu_x = windowed_mean(x)
        mu_y = windowed_mean(y)
        var_x = windowed_mean(x * x) - mu_x * mu_x
        var_y = windowed_mean(y * y) - mu_y * mu_y
        cov = windowed_mean(x * y) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# no-reference underwater quality


@dataclass(frozen=True)
class UiqmConfig:
    """Every constant of the underwater quality measure, in one place."""

    c1: float = 0.0282
    c2: float = 0.2953
    c3: float = 3.5753
    alpha_trim_low: float = 0.1
    alpha_trim_high: float = 0.1
    colorfulness_mean_coeff: float = -0.0268
    colorfulness_std_coeff: float = 0.1586
    luma_weights: tuple = (0.299, 0.587, 0.114)
    block_size: int = 8
    plip_gamma: float = 1026.0


DEFAULT_UIQM = UiqmConfig()


def _require_rgb(image: np.ndarray, what: str) -> None:
    if image.ndim != 3 or image.shape[-1] != 3:
        raise ShapeMismatchError(f"{what} input", "(H, W, 3)", image.shape)


def alpha_trimmed_mean(values: np.ndarray, alpha_low: float, alpha_high: float) -> float:
    """Mean after discarding the lowest alpha_low and highest alpha_high fractions."""
    x = np.sort(values, axis=None)
    k = x.size
    t_low = math.ceil(alpha_low * k)
    t_high = math.floor(alpha_high * k)
    kept = x[t_low : k - t_high]
    if kept.size == 0:
        return 0.0
    return float(kept.mean())

def uicm(image: np.ndarray, config: UiqmConfig = DEFAULT_UIQM) -> float:
    """Colorfulness from the RG and YB opponent channels.

    Trimmed means capture chroma bias, deviations about them capture chroma
    spread; a gray image (R = G = B) scores exactly 0.
    """
    _require_rgb(image, "colorfulness")
    img = image.astype(np.float64)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    rg = (r - g).ravel()
    yb = ((r + g) / 2.0 - b).ravel()
    mu_rg = alpha_trimmed_mean(rg, config.alpha_trim_low, config.alpha_trim_high)
    mu_yb = alpha_trimmed_mean(yb, config.alpha_trim_low, config.alpha_trim_high)
    var_rg = float(np.mean((rg - mu_rg) ** 2))
    var_yb = float(np.mean((yb - mu_yb) ** 2))
    return config.colorfulness_mean_coeff * math.sqrt(
        mu_rg * mu_rg + mu_yb * mu_yb
    ) + config.colorfulness_std_coeff * math.sqrt(var_rg + var_yb)


def _block_reduce_minmax(plane: np.ndarray, block: int):
    """Per-block (min, max) over a grid of block x block tiles; edges cropped."""
    h, w = plane.shape[:2]
    k2, k1 = h // block, w // block
    if k1 == 0 or k2 == 0:
        raise ShapeMismatchError("block grid", f"image >= {block} x {block}", (h, w))
    trimmed = plane[: k2 * block, : k1 * block]
    if plane.ndim == 2:
        tiles = trimmed.reshape(k2, block, k1, block).transpose(0, 2, 1, 3).reshape(k2, k1, -1)
    else:
        c = plane.shape[2]
        tiles = (
            trimmed.reshape(k2, block, k1, block, c).transpose(0, 2, 1, 3, 4).reshape(k2, k1, -1)
        )
    return tiles.min(axis=-1), tiles.max(axis=-1)


def eme(plane: np.ndarray, block: int = 8) -> float:
    """Block-wise log contrast: (2 / (k1 k2)) * sum(log(max / min)).

    Block extrema are clamped to >= 1 before the ratio, so flat blocks
    (including all-zero ones) contribute exactly 0.
    """
    mins, maxs = _block_reduce_minmax(plane, block)
    lo = np.maximum(mins, 1.0)
    hi = np.maximum(maxs, 1.0)
    return float((2.0 / mins.size) * np.sum(np.log(hi / lo)))


def sobel_magnitude(plane: np.ndarray) -> np.ndarray:
    dy = ndimage.sobel(plane.astype(np.float64), axis=0, mode="reflect")
    dx = ndimage.sobel(plane.astype(np.float64), axis=1, mode="reflect")
    return np.hypot(dx, dy)


def uism(image: np.ndarray, config: UiqmConfig = DEFAULT_UIQM) -> float:
    """Sharpness: luma-weighted EME of each Sobel-edge-masked channel."""
    _require_rgb(image, "sharpness")
    img = image.astype(np.float64)
    total = 0.0
    for c, lam in enumerate(config.luma_weights):
        channel = img[..., c]
        edge_masked = sobel_magnitude(channel) * channel
        total += lam * eme(edge_masked, config.block_size)
    return total


def uiconm(image: np.ndarray, config: UiqmConfig = DEFAULT_UIQM) -> float:
    """Contrast: block-wise log entropy of the PLIP Michelson ratio.

    For each block, theta = gamma (max - min) / (gamma - min) is the PLIP
    difference and plus = max + min - max min / gamma the PLIP sum; the score
    is -(1 / (k1 k2)) * sum(r log r) with r = theta / plus. Flat blocks
    contribute 0.
    """
    _require_rgb(image, "contrast")
    img = image.astype(np.float64)
    mins, maxs = _block_reduce_minmax(img, config.block_size)
    gamma = config.plip_gamma
    theta = gamma * (maxs - mins) / (gamma - mins)
    plus = maxs + mins - maxs * mins / gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(plus > 0, theta / np.where(plus > 0, plus, 1.0), 0.0)
        term = np.where(ratio > 0, ratio * np.log(np.where(ratio > 0, ratio, 1.0)), 0.0)
    return float(-np.sum(term) / mins.size) + 0.0  # normalize -0.0 on flat input


def uiqm_from_subscores(
    colorfulness: float, sharpness: float, contrast: float, config: UiqmConfig = DEFAULT_UIQM
) -> float:
    """The linear combination c1 * UICM + c2 * UISM + c3 * UIConM."""
    return config.c1 * colorfulness + config.c2 * sharpness + config.c3 * contrast


def uiqm(image: np.ndarray, config: UiqmConfig = DEFAULT_UIQM) -> dict:
    """Combined score plus sub-scores for one (H, W, 3) image in 0..255."""
    sub_c = uicm(image, config)
    sub_s = uism(image, config)
    sub_n = uiconm(image, config)
    return {
        "uiqm": uiqm_from_subscores(sub_c, sub_s, sub_n, config),
        "uicm": sub_c,
        "uism": sub_s,
        "uiconm": sub_n,
    }


# ---------------------------------------------------------------------------
# compression / speed-up rates


@dataclass(frozen=True)
class RateResult:
    ratio: float
    relative_gain: float  # ratio - 1; matches the published table convention


def _rate(original: float, compressed: float, what: str) -> RateResult:
    if original <= 0 or compressed <= 0:
        raise ValueError(f"{what} must be positive, got {original} and {compressed}")
    ratio = original / compressed
    return RateResult(ratio=ratio, relative_gain=ratio - 1.0)


def compression_rate(alpha_original: float, alpha_compressed: float) -> RateResult:
    """Parameter-count ratio of the original model over the compressed one."""
    return _rate(alpha_original, alpha_compressed, "parameter counts")


def speed_up(beta_original: float, beta_compressed: float) -> RateResult:
    """Per-image latency ratio of the original model over the compressed one."""
    return _rate(beta_original, beta_compressed, "per-image times")


# ---------------------------------------------------------------------------
# aggregation


def aggregate(values) -> tuple:
    """(mean, sample std) with the n - 1 denominator; std is 0 for one row."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("cannot aggregate zero rows")
    mean = sum(vals) / len(vals)
    if len(vals) == 1:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
    return mean, math.sqrt(var)
