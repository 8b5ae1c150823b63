"""Shadow-ratio estimation, shaping and linear compositing.

All arithmetic happens in linear space and per color channel. The render
pair R0 (receiver only) and R1 (receiver + object) is linear already; the
photographic background is sRGB and linearized with the power-law transfer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .radiometry import TransferParams, linear_to_srgb, srgb_to_linear


@dataclass(frozen=True)
class ShapingParams:
    gamma_s: float = 0.8
    s_min: float = 0.05
    strength: float = 0.9  # lambda: global shadow intensity
    epsilon: float = 1e-6
    validity_bound: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.gamma_s <= 1.0:
            raise InvalidInputError(f"gamma_s must be in (0, 1], got {self.gamma_s}")
        if not 0.0 <= self.s_min < 1.0:
            raise InvalidInputError(f"s_min must be in [0, 1), got {self.s_min}")
        if not 0.0 <= self.strength <= 1.0:
            raise InvalidInputError(f"strength must be in [0, 1], got {self.strength}")
        if not self.epsilon > 0 or not self.validity_bound >= 0:
            raise InvalidInputError("epsilon must be > 0 and validity_bound >= 0")

    @property
    def floor(self) -> float:
        """Smallest value shape_ratio can produce."""
        return 1.0 - self.strength * (1.0 - self.s_min)


@dataclass
class ShadowRatioMap:
    ratio: np.ndarray  # (H, W, 3) in [0, 1]
    valid: np.ndarray  # (H, W, 3) bool


def _rgb(a, name: str) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 3 or a.shape[2] < 3:
        raise InvalidInputError(f"{name} must be an (H, W, 3|4) image, got {a.shape}")
    return a[..., :3].astype(np.float64)


def _same_size(**images):
    shapes = {k: np.asarray(v).shape[:2] for k, v in images.items()}
    if len(set(shapes.values())) != 1:
        raise InvalidInputError(f"resolution mismatch: {shapes}")


def shadow_ratio(r0, r1, p: ShapingParams = ShapingParams()) -> ShadowRatioMap:
    _same_size(r0=r0, r1=r1)
    a, b = _rgb(r0, "R0"), _rgb(r1, "R1")
    valid = a >= p.validity_bound
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.clip(b / (a + p.epsilon), 0.0, 1.0)
    ratio = np.where(valid, np.nan_to_num(raw, nan=1.0), 1.0)
    return ShadowRatioMap(ratio, valid)


def shape_ratio(s: ShadowRatioMap, p: ShapingParams = ShapingParams()) -> ShadowRatioMap:
    ratio = np.asarray(s.ratio, dtype=np.float64)
    soft = np.maximum(np.power(ratio, p.gamma_s), p.s_min)
    # (1 - lambda) + lambda * soft equals 1 - lambda * (1 - soft) and is exact at lambda = 1
    shaped = np.minimum((1.0 - p.strength) + p.strength * soft, 1.0)
    return ShadowRatioMap(shaped, s.valid)


def composite(background, obj, shaped: ShadowRatioMap, mask=None,
              transfer: TransferParams = TransferParams()) -> np.ndarray:
    """Darken the linearized background by the shaped ratio and lay the object over it.

    ``obj`` is the linear, premultiplied RGBA object layer. ``mask`` defaults to
    its alpha channel. Returns an sRGB (H, W, 3) image in [0, 1].
    """
    bg = _rgb(background, "background")
    o = np.asarray(obj, dtype=np.float64)
    if mask is None:
        if o.ndim != 3 or o.shape[2] != 4:
            raise InvalidInputError("object layer needs an alpha channel when no mask is given")
        mask = o[..., 3]
    m = np.clip(np.asarray(mask, dtype=np.float64), 0.0, 1.0)
    _same_size(background=bg, obj=o, mask=m, ratio=shaped.ratio)
    lin_bg = srgb_to_linear(bg, transfer).astype(np.float64)
    out = lin_bg * shaped.ratio * (1.0 - m[..., None]) + _object_term(o, m)
    return np.clip(linear_to_srgb(out, transfer), 0.0, 1.0)


def _object_term(o: np.ndarray, m: np.ndarray) -> np.ndarray:
    # premultiplied color already carries the coverage factor
    if o.shape[2] == 4:
        return o[..., :3]
    return o[..., :3] * m[..., None]
