"""Reading and writing PNG (8-bit sRGB), OpenEXR and PFM (float linear)."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np
import OpenEXR
from PIL import Image

from .errors import InvalidInputError

LINEAR_SUFFIXES = (".exr", ".pfm")


def is_linear_path(path) -> bool:
    return Path(path).suffix.lower() in LINEAR_SUFFIXES


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        has_alpha = im.mode in ("RGBA", "LA") or (im.mode == "P" and "transparency" in im.info)
        mode = "RGBA" if has_alpha else "RGB"
        a = np.asarray(im.convert(mode), dtype=np.float32)
    return a / 255.0


def write_png(path, img) -> None:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        a = a[..., None].repeat(3, axis=2)
    q = np.round(255.0 * np.clip(np.nan_to_num(a), 0.0, 1.0)).astype(np.uint8)
    Image.fromarray(q, mode="RGBA" if q.shape[2] == 4 else "RGB").save(path)


def read_exr(path) -> np.ndarray:
    with OpenEXR.File(str(path)) as f:
        channels = f.channels()
        for key in ("RGBA", "RGB"):
            if key in channels:
                return np.ascontiguousarray(channels[key].pixels, dtype=np.float32)
        if "Y" in channels:
            y = np.asarray(channels["Y"].pixels, dtype=np.float32)
            return np.repeat(y[..., None], 3, axis=2)
    raise InvalidInputError(f"{path}: no RGB(A) channels in EXR")


def write_exr(path, img) -> None:
    """Write 32-bit float scanline EXR with ZIP compression."""
    a = np.ascontiguousarray(img, dtype=np.float32)
    if a.ndim != 3 or a.shape[2] not in (3, 4):
        raise InvalidInputError(f"EXR writer expects (H, W, 3|4), got {a.shape}")
    header = {"compression": OpenEXR.ZIP_COMPRESSION, "type": OpenEXR.scanlineimage}
    key = "RGBA" if a.shape[2] == 4 else "RGB"
    with OpenEXR.File(header, {key: a}) as f:
        f.write(str(path))


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        tag = f.readline().strip()
        if tag not in (b"PF", b"Pf"):
            raise InvalidInputError(f"{path}: not a PFM file")
        dims = f.readline()
        while dims.startswith(b"#"):
            dims = f.readline()
        m = re.match(rb"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise InvalidInputError(f"{path}: malformed PFM header")
        width, height = int(m.group(1)), int(m.group(2))
        scale = float(f.readline().strip())
        endian = "<" if scale < 0 else ">"
        nch = 3 if tag == b"PF" else 1
        data = np.frombuffer(f.read(), dtype=endian + "f4", count=width * height * nch)
    img = np.flipud(data.reshape(height, width, nch)).astype(np.float32)
    if nch == 1:
        img = np.repeat(img, 3, axis=2)
    return img


def write_pfm(path, img) -> None:
    """Little-endian (scale -1.0) color PFM; alpha is dropped."""
    a = np.asarray(img, dtype=np.float32)
    if a.ndim != 3 or a.shape[2] < 3:
        raise InvalidInputError(f"PFM writer expects (H, W, 3+), got {a.shape}")
    h, w = a.shape[:2]
    body = np.flipud(a[..., :3]).astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(b"PF\n%d %d\n-1.0\n" % (w, h))
        f.write(body)


def read_linear(path) -> np.ndarray:
    suffix = Path(path).suffix.lower()
    if suffix == ".exr":
        return read_exr(path)
    if suffix == ".pfm":
        return read_pfm(path)
    raise InvalidInputError(f"{path}: linear images must be .exr or .pfm")


def write_linear(path, img) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".exr":
        write_exr(path, img)
    elif suffix == ".pfm":
        write_pfm(path, img)
    else:
        raise InvalidInputError(f"{path}: linear images must be .exr or .pfm")


def read_image(path) -> tuple[np.ndarray, bool]:
    """Return ``(pixels, is_linear)`` based on the file extension."""
    if not Path(path).exists():
        raise InvalidInputError(f"image not found: {path}")
    if is_linear_path(path):
        return read_linear(path), True
    return read_png(path), False
