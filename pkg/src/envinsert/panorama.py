"""Equirectangular <-> cubemap projection.

Direction convention (right-handed, Y up, -Z forward)::

    theta = 2*pi*(u - 0.5)      # azimuth
    phi   = pi*v                # polar angle from +Y
    d     = (sin(phi) sin(theta), cos(phi), -sin(phi) cos(theta))

Pixel (i, j) of a W x H panorama has its center at ``((i+0.5)/W, (j+0.5)/H)``.
"""
from __future__ import annotations

from typing import Mapping

import numpy as np

from .errors import InvalidInputError

# face -> (forward, up); right = forward x up, image rows run along -up
FACE_AXES: dict[str, tuple[tuple[float, float, float], tuple[float, float, float]]] = {
    "+X": ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0)),
    "-X": ((-1.0, 0.0, 0.0), (0.0, 1.0, 0.0)),
    "+Y": ((0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),
    "-Y": ((0.0, -1.0, 0.0), (0.0, 0.0, -1.0)),
    "+Z": ((0.0, 0.0, 1.0), (0.0, 1.0, 0.0)),
    "-Z": ((0.0, 0.0, -1.0), (0.0, 1.0, 0.0)),
}
FACE_NAMES = tuple(FACE_AXES)


def face_basis(face: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(forward, right, up)`` unit vectors for a cubemap face."""
    forward, up = (np.asarray(v, dtype=np.float64) for v in FACE_AXES[face])
    return forward, np.cross(forward, up), up


def dir_from_equirect(u, v) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    theta = 2.0 * np.pi * (u - 0.5)
    phi = np.pi * v
    sp = np.sin(phi)
    return np.stack([sp * np.sin(theta), np.cos(phi), -sp * np.cos(theta)], axis=-1)


def equirect_from_dir(d) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray(d, dtype=np.float64)
    if d.shape[-1] != 3:
        raise InvalidInputError(f"directions must have a trailing axis of 3, got {d.shape}")
    n = np.linalg.norm(d, axis=-1)
    if np.any(n < 1e-12):
        raise InvalidInputError("zero-length direction has no equirect coordinate")
    x, y, z = (d[..., k] / n for k in range(3))
    u = np.mod(np.arctan2(x, -z) / (2.0 * np.pi) + 0.5, 1.0)
    u = np.where(u >= 1.0, 0.0, u)
    v = np.arccos(np.clip(y, -1.0, 1.0)) / np.pi
    return u, v


def pixel_center_directions(width: int, height: int) -> np.ndarray:
    """Directions through every pixel center of a ``width x height`` panorama, shape (H, W, 3)."""
    u = (np.arange(width) + 0.5) / width
    v = (np.arange(height) + 0.5) / height
    uu, vv = np.meshgrid(u, v)
    return dir_from_equirect(uu, vv)


def _bilinear(img: np.ndarray, x: np.ndarray, y: np.ndarray, wrap_x: bool) -> np.ndarray:
    # x, y are continuous pixel coordinates where integer k is the center of pixel k
    h, w = img.shape[:2]
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    x1 = x0 + 1
    y1 = y0 + 1
    if wrap_x:
        x0 %= w
        x1 %= w
    else:
        x0 = np.clip(x0, 0, w - 1)
        x1 = np.clip(x1, 0, w - 1)
    y0 = np.clip(y0, 0, h - 1)
    y1 = np.clip(y1, 0, h - 1)
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def validate_faces(faces: Mapping[str, np.ndarray]) -> int:
    """Check a cubemap face set and return its face resolution."""
    missing = [f for f in FACE_NAMES if f not in faces]
    if missing:
        raise InvalidInputError(f"cubemap is missing faces: {', '.join(missing)}")
    sizes = set()
    for name in FACE_NAMES:
        a = np.asarray(faces[name])
        if a.ndim != 3 or a.shape[0] != a.shape[1]:
            raise InvalidInputError(f"face {name} must be square (H, W, C), got {a.shape}")
        sizes.add(a.shape)
    if len(sizes) != 1:
        raise InvalidInputError(f"cubemap faces differ in shape: {sorted(sizes)}")
    return sizes.pop()[0]


def sample_faces(faces: Mapping[str, np.ndarray], d: np.ndarray) -> np.ndarray:
    """Bilinearly sample a cubemap along directions ``d`` (..., 3)."""
    n = validate_faces(faces)
    d = np.asarray(d, dtype=np.float64)
    channels = np.asarray(faces[FACE_NAMES[0]]).shape[2]
    out = np.zeros(d.shape[:-1] + (channels,), dtype=np.float64)
    major = np.argmax(np.abs(d), axis=-1)
    for name in FACE_NAMES:
        forward, right, up = face_basis(name)
        axis = int(np.argmax(np.abs(forward)))
        sel = (major == axis) & (np.sign(d[..., axis]) == np.sign(forward[axis]))
        if not np.any(sel):
            continue
        ds = d[sel]
        depth = ds @ forward
        a = (ds @ right) / depth
        b = -(ds @ up) / depth
        x = (a + 1.0) * 0.5 * n - 0.5
        y = (b + 1.0) * 0.5 * n - 0.5
        out[sel] = _bilinear(np.asarray(faces[name], dtype=np.float64), x, y, wrap_x=False)
    return out


def stitch_cubemap(faces: Mapping[str, np.ndarray], out_width: int) -> np.ndarray:
    """Stitch six 90-degree faces into a ``out_width x out_width/2`` panorama."""
    if out_width < 2 or out_width % 2:
        raise InvalidInputError(f"panorama width must be even and >= 2, got {out_width}")
    validate_faces(faces)
    dirs = pixel_center_directions(out_width, out_width // 2)
    return sample_faces(faces, dirs).astype(np.float32)


def _check_equirect(env: np.ndarray) -> np.ndarray:
    env = np.asarray(env)
    if env.ndim != 3 or env.shape[1] != 2 * env.shape[0]:
        raise InvalidInputError(f"equirect map must be 2:1 (H, 2H, C), got {env.shape}")
    return env


def sample_env(env, d) -> np.ndarray:
    """Bilinear lookup with horizontal wrap and vertical clamp; ``d`` is (3,) or (..., 3)."""
    env = _check_equirect(env)
    h, w = env.shape[:2]
    u, v = equirect_from_dir(d)
    return _bilinear(env.astype(np.float64), u * w - 0.5, v * h - 0.5, wrap_x=True)


def face_directions(face: str, n: int) -> np.ndarray:
    """Directions through the pixel centers of one face, shape (n, n, 3), not normalized."""
    forward, right, up = face_basis(face)
    c = 2.0 * (np.arange(n) + 0.5) / n - 1.0
    b, a = np.meshgrid(c, c, indexing="ij")
    return forward + a[..., None] * right - b[..., None] * up


def resample_cubemap(env, face_resolution: int) -> dict[str, np.ndarray]:
    """Render six faces back out of an equirect map."""
    out = {}
    for name in FACE_NAMES:
        d = face_directions(name, face_resolution)
        d = d / np.linalg.norm(d, axis=-1, keepdims=True)
        out[name] = sample_env(env, d).astype(np.float32)
    return out
