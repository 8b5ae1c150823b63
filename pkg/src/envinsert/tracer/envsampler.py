"""Importance sampling of an equirectangular environment.

The distribution is piecewise constant over pixels, with each pixel weighted
by luminance times its exact solid angle, so a uniform map gives exactly the
uniform-sphere density. Directions are sampled uniformly in solid angle
inside the chosen pixel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from ..radiometry import LuminanceWeights, luminance
from . import kernels


@dataclass
class EnvSampler:
    env: np.ndarray  # (H, W, 3) float64 radiance
    row_cdf: np.ndarray
    col_cdf: np.ndarray
    row_p: np.ndarray
    col_p: np.ndarray
    pix_solid: np.ndarray
    uniform: bool

    def sample(self, u1: float, u2: float, u3: float, u4: float) -> tuple[np.ndarray, float]:
        dx, dy, dz, pdf = kernels.env_sample(self.row_cdf, self.col_cdf, self.row_p, self.col_p,
                                             self.pix_solid, self.uniform, u1, u2, u3, u4)
        return np.array([dx, dy, dz]), pdf

    def pdf(self, d) -> float:
        d = np.asarray(d, dtype=np.float64)
        d = d / np.linalg.norm(d)
        return kernels.env_pdf(self.row_p, self.col_p, self.pix_solid, self.uniform, d[0], d[1], d[2])

    def kernel_args(self) -> tuple:
        return (self.env, self.row_cdf, self.col_cdf, self.row_p, self.col_p, self.pix_solid, self.uniform)


def pixel_solid_angles(width: int, height: int) -> np.ndarray:
    """Solid angle of one pixel in each row, shape (H,)."""
    edges = np.cos(np.pi * np.arange(height + 1) / height)
    return (2.0 * np.pi / width) * (edges[:-1] - edges[1:])


def build_env_sampler(env, weights: LuminanceWeights = LuminanceWeights()) -> EnvSampler:
    env = np.asarray(env, dtype=np.float64)
    if env.ndim != 3 or env.shape[2] < 3 or env.shape[1] != 2 * env.shape[0]:
        raise InvalidInputError(f"environment must be a 2:1 RGB map, got {env.shape}")
    env = np.ascontiguousarray(np.nan_to_num(env[..., :3], nan=0.0, posinf=0.0, neginf=0.0))
    if np.any(env < 0):
        raise InvalidInputError("environment radiance must be nonnegative")
    h, w = env.shape[:2]
    solid = pixel_solid_angles(w, h)
    mass = np.maximum(luminance(env, weights).astype(np.float64), 0.0) * solid[:, None]
    row_mass = mass.sum(axis=1)
    total = row_mass.sum()
    uniform = not total > 0.0
    if uniform:
        row_p = np.full(h, 1.0 / h)
        col_p = np.full((h, w), 1.0 / w)
    else:
        row_p = row_mass / total
        safe = np.where(row_mass > 0, row_mass, 1.0)
        col_p = np.where(row_mass[:, None] > 0, mass / safe[:, None], 1.0 / w)
    row_cdf = np.r_[0.0, np.cumsum(row_p)]
    row_cdf /= row_cdf[-1]
    col_cdf = np.c_[np.zeros(h), np.cumsum(col_p, axis=1)]
    col_cdf /= col_cdf[:, -1:]
    return EnvSampler(env, row_cdf, np.ascontiguousarray(col_cdf), row_p, np.ascontiguousarray(col_p),
                      solid, bool(uniform))
