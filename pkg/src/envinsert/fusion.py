"""HDR reconstruction from an exposure bracket by luminance-gated merging.

Brackets are merged bottom-up: start from the darkest estimate and walk
towards the base exposure, keeping the darker (unclipped) estimate wherever
the brighter image's normalized luminance is above the saturation threshold.
The threshold is softened with a smoothstep in luminance so the output is
continuous in the inputs. Chromaticity always comes from the base exposure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .radiometry import LuminanceWeights, TransferParams, luminance, srgb_to_linear


@dataclass(frozen=True)
class FusionParams:
    saturation_threshold: float = 0.9
    blend_halfwidth: float = 0.05
    epsilon: float = 1e-6
    transfer: TransferParams = field(default_factory=TransferParams)
    weights: LuminanceWeights = field(default_factory=LuminanceWeights)

    def __post_init__(self):
        t, hw = self.saturation_threshold, self.blend_halfwidth
        if not 0.0 < t < 1.0:
            raise InvalidInputError(f"saturation_threshold must be in (0, 1), got {t}")
        if not 0.0 <= hw < min(t, 1.0 - t):
            raise InvalidInputError(f"blend_halfwidth must be in [0, {min(t, 1 - t)}), got {hw}")
        if not self.epsilon > 0:
            raise InvalidInputError("epsilon must be > 0")


@dataclass(frozen=True)
class Bracket:
    image: np.ndarray  # sRGB equirect panorama, values in [0, 1]
    ev: float


@dataclass
class FusedHdr:
    image: np.ndarray  # linear float32 (H, W, 3)
    dynamic_range_stops: float


def validate_sequence(seq: Sequence[Bracket]) -> list[Bracket]:
    seq = list(seq)
    if not seq:
        raise InvalidInputError("bracket sequence is empty")
    shape = np.asarray(seq[0].image).shape
    for prev, cur in zip(seq, seq[1:]):
        if not cur.ev > prev.ev:
            raise InvalidInputError(f"bracket EVs must be strictly increasing, got {prev.ev} then {cur.ev}")
    for b in seq:
        img = np.asarray(b.image)
        if img.shape != shape:
            raise InvalidInputError(f"bracket images differ in shape: {img.shape} vs {shape}")
        if not np.isfinite(b.ev):
            raise InvalidInputError(f"bracket EV must be finite, got {b.ev}")
    return seq


def normalized_luminance(entry: Bracket, p: FusionParams = FusionParams()) -> np.ndarray:
    lin = srgb_to_linear(np.asarray(entry.image)[..., :3], p.transfer)
    return luminance(lin, p.weights).astype(np.float64)


def scale_to_irradiance(lum, ev: float) -> np.ndarray:
    return np.asarray(lum, dtype=np.float64) * 2.0 ** (-ev)


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def keep_darker_weight(lum, p: FusionParams) -> np.ndarray:
    """Blend weight toward the darker running estimate, as a function of the brighter image's luminance."""
    lum = np.asarray(lum, dtype=np.float64)
    t, hw = p.saturation_threshold, p.blend_halfwidth
    if hw == 0.0:
        return (lum > t).astype(np.float64)
    return _smoothstep((lum - (t - hw)) / (2.0 * hw))


def iterative_merge(seq: Sequence[Bracket], p: FusionParams = FusionParams()) -> np.ndarray:
    seq = validate_sequence(seq)
    merged = scale_to_irradiance(normalized_luminance(seq[0], p), seq[0].ev)
    for entry in seq[1:]:
        lum = normalized_luminance(entry, p)
        estimate = scale_to_irradiance(lum, entry.ev)
        w = keep_darker_weight(lum, p)
        merged = w * merged + (1.0 - w) * estimate
    return np.maximum(merged, 0.0)


def reattach_chromaticity(merged, base: Bracket, p: FusionParams = FusionParams()) -> FusedHdr:
    lin = srgb_to_linear(np.asarray(base.image)[..., :3], p.transfer).astype(np.float64)
    lum = luminance(lin, p.weights).astype(np.float64)
    merged = np.asarray(merged, dtype=np.float64)
    valid = lum > p.epsilon
    scale = np.where(valid, merged / np.maximum(lum, p.epsilon), 0.0)
    hdr = (lin * scale[..., None]).astype(np.float32)
    hdr = np.nan_to_num(hdr, nan=0.0, posinf=0.0, neginf=0.0)
    return FusedHdr(hdr, dynamic_range_stops(hdr, base.ev, p.weights))


def dynamic_range_stops(hdr, base_ev: float = 0.0, weights: LuminanceWeights = LuminanceWeights()) -> float:
    """Stops above the base exposure's clip level reached by the brightest pixel."""
    peak = float(np.max(luminance(hdr, weights)))
    if peak <= 0.0:
        return 0.0
    clip = 2.0 ** (-base_ev)
    return float(np.log2(peak / clip))


def fuse_brackets(seq: Sequence[Bracket], p: FusionParams = FusionParams()) -> FusedHdr:
    seq = validate_sequence(seq)
    merged = iterative_merge(seq, p)
    return reattach_chromaticity(merged, seq[-1], p)
