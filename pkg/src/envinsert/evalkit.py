"""Image metrics: PSNR, SSIM and the contrastive VQA ratio."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError
from .radiometry import LuminanceWeights

PSNR_CAP = 99.0
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    vqa_ratio: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def _gray(a: np.ndarray) -> np.ndarray:
    if a.ndim == 2:
        return a
    if a.shape[2] == 1:
        return a[..., 0]
    return a[..., :3] @ LuminanceWeights().as_array()


def ssim(a, b) -> float:
    """Mean SSIM over valid 11x11 Gaussian windows of the luminance of two sRGB images."""
    a, b = _pair(a, b)
    x, y = _gray(a), _gray(b)
    if min(x.shape) < SSIM_WINDOW:
        raise InvalidInputError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape}")
    k = gaussian_window()
    pad = SSIM_WINDOW // 2
    crop = (slice(pad, -pad), slice(pad, -pad))

    def filt(img):
        return ndimage.correlate(img, k, mode="constant")[crop]

    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def vqa_ratio(pos: float, neg: float) -> float:
    if pos < 0 or neg < 0:
        raise InvalidInputError(f"scores must be nonnegative, got pos={pos}, neg={neg}")
    if pos + neg <= 0:
        raise InvalidInputError("pos + neg must be > 0")
    return pos / (pos + neg)


def evaluate(pred, ref, pos_score: float | None = None, neg_score: float | None = None) -> MetricReport:
    ratio = None if pos_score is None or neg_score is None else vqa_ratio(pos_score, neg_score)
    return MetricReport(psnr=psnr(pred, ref), ssim=ssim(pred, ref), vqa_ratio=ratio)
