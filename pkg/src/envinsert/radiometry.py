"""Color transfer, luminance and the exposure oracle.

Images are numpy arrays shaped ``(H, W, C)`` with C in {3, 4}. Linear images
hold float32 radiance (>= 0, unbounded); sRGB images hold display values in
[0, 1]. A fourth channel is alpha and is never gamma-transformed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

DEFAULT_GAMMA = 2.4
DEFAULT_LUMINANCE_WEIGHTS = (0.21267, 0.71516, 0.07217)


@dataclass(frozen=True)
class TransferParams:
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidInputError(f"gamma must be > 0, got {self.gamma}")


@dataclass(frozen=True)
class LuminanceWeights:
    w: tuple[float, float, float] = field(default=DEFAULT_LUMINANCE_WEIGHTS)

    def __post_init__(self):
        w = tuple(float(x) for x in self.w)
        if len(w) != 3 or min(w) < 0 or abs(sum(w) - 1.0) > 1e-4:
            raise InvalidInputError(f"luminance weights must be 3 nonnegative values summing to 1, got {w}")
        object.__setattr__(self, "w", w)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.w, dtype=np.float64)


def _as_image(img) -> np.ndarray:
    a = np.asarray(img)
    if a.ndim != 3 or a.shape[2] not in (3, 4):
        raise InvalidInputError(f"expected an (H, W, 3|4) image, got shape {a.shape}")
    return a


def _finite(a: np.ndarray) -> np.ndarray:
    return np.nan_to_num(a, nan=0.0, posinf=0.0, neginf=0.0)


def srgb_to_linear(img, p: TransferParams = TransferParams()) -> np.ndarray:
    """Linearize display values with a pure power law (alpha passes through)."""
    a = _as_image(img)
    out = np.array(a, dtype=np.float32, copy=True)
    color = np.clip(_finite(a[..., :3].astype(np.float64)), 0.0, 1.0)
    out[..., :3] = np.power(color, p.gamma)
    return out


def linear_to_srgb(img, p: TransferParams = TransferParams()) -> np.ndarray:
    """Clip linear radiance to [0, 1] and gamma-encode it (alpha passes through)."""
    a = _as_image(img)
    out = np.array(a, dtype=np.float32, copy=True)
    color = np.clip(_finite(a[..., :3].astype(np.float64)), 0.0, 1.0)
    out[..., :3] = np.power(color, 1.0 / p.gamma)
    if a.shape[2] == 4:
        out[..., 3] = np.clip(_finite(a[..., 3]), 0.0, 1.0)
    return out


def luminance(img, w: LuminanceWeights = LuminanceWeights()) -> np.ndarray:
    """Per-pixel dot product of the color channels with ``w``; returns ``(H, W)``."""
    a = np.asarray(img)
    if a.ndim != 3 or a.shape[2] < 3:
        raise InvalidInputError(f"luminance needs at least 3 channels, got shape {a.shape}")
    return (a[..., :3].astype(np.float64) @ w.as_array()).astype(np.float32)


def simulate_underexposure(hdr, ev: float, p: TransferParams = TransferParams()) -> np.ndarray:
    """Re-expose an HDR image by ``ev`` stops, clip and gamma-encode it.

    This is the synthetic bracket generator: ``clip(hdr * 2**ev, 0, 1) ** (1/gamma)``.
    """
    if not np.isfinite(ev):
        raise InvalidInputError(f"ev must be finite, got {ev}")
    a = _as_image(hdr)
    scaled = np.array(a, dtype=np.float64, copy=True)
    scaled[..., :3] = scaled[..., :3] * (2.0 ** ev)
    return linear_to_srgb(scaled, p)
