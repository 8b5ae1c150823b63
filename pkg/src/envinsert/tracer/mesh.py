"""Triangle meshes, materials and a small OBJ reader."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import InvalidInputError

RECEIVER = "receiver"
OBJECT = "object"


@dataclass(frozen=True)
class Material:
    base_color: tuple[float, float, float] = (0.8, 0.8, 0.8)
    roughness: float = 0.5
    metallic: float = 0.0

    def __post_init__(self):
        c = tuple(float(x) for x in self.base_color)
        if len(c) != 3 or min(c) < 0 or max(c) > 1:
            raise InvalidInputError(f"base_color must be 3 values in [0, 1], got {self.base_color}")
        if not 0.0 <= self.roughness <= 1.0 or not 0.0 <= self.metallic <= 1.0:
            raise InvalidInputError("roughness and metallic must lie in [0, 1]")
        object.__setattr__(self, "base_color", c)


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) meters
    faces: np.ndarray  # (F, 3) vertex indices, counter-clockwise around the front normal
    colors: np.ndarray | None = None  # (V, 3) linear RGB
    role: str = OBJECT
    material: Material | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(self.colors) != len(self.vertices):
                raise InvalidInputError("vertex color count does not match vertex count")
        if self.role not in (RECEIVER, OBJECT):
            raise InvalidInputError(f"mesh role must be 'receiver' or 'object', got {self.role!r}")
        if self.role == RECEIVER and self.colors is None:
            raise InvalidInputError("receiver meshes need per-vertex colors")
        if self.role == OBJECT and self.material is None:
            self.material = Material()
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise InvalidInputError("face index out of range")
        if len(self.faces) and np.any(self.areas() <= 1e-12):
            raise InvalidInputError("mesh has degenerate triangles (area <= 1e-12)")

    def areas(self) -> np.ndarray:
        v = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    def transformed(self, matrix) -> "TriangleMesh":
        """Apply a row-major 4x4 affine transform; mirroring transforms keep faces outward."""
        m = np.asarray(matrix, dtype=np.float64).reshape(4, 4)
        hom = np.c_[self.vertices, np.ones(len(self.vertices))] @ m.T
        w = hom[:, 3:4]
        if np.any(np.abs(w) < 1e-12):
            raise InvalidInputError("transform maps vertices to infinity")
        faces = self.faces if np.linalg.det(m[:3, :3]) > 0 else self.faces[:, ::-1]
        return TriangleMesh(hom[:, :3] / w, faces.copy(), self.colors, self.role, self.material)


def load_obj(path, role: str = OBJECT, material: Material | None = None) -> TriangleMesh:
    """Read positions, optional ``v x y z r g b`` colors and polygon faces (fan-triangulated)."""
    verts, colors, faces = [], [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        try:
            if parts[0] == "v":
                vals = [float(x) for x in parts[1:]]
                verts.append(vals[:3])
                if len(vals) >= 6:
                    colors.append(vals[3:6] if len(vals) == 6 else vals[4:7])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
        except (ValueError, IndexError) as exc:
            raise InvalidInputError(f"{path}:{lineno}: malformed OBJ line {raw!r}") from exc
    if not verts or not faces:
        raise InvalidInputError(f"{path}: OBJ has no triangles")
    if colors and len(colors) != len(verts):
        raise InvalidInputError(f"{path}: vertex colors given for only some vertices")
    return TriangleMesh(np.array(verts), np.array(faces), np.array(colors) if colors else None, role, material)


def save_obj(path, mesh: TriangleMesh) -> None:
    lines = []
    for k, v in enumerate(mesh.vertices):
        c = "" if mesh.colors is None else " %.6g %.6g %.6g" % tuple(mesh.colors[k])
        lines.append("v %.9g %.9g %.9g%s" % (v[0], v[1], v[2], c))
    lines += ["f %d %d %d" % tuple(f + 1) for f in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


# --- primitives used by the demo scene and tests -------------------------------------------------

def box(lo, hi, role: str = OBJECT, color=(0.8, 0.8, 0.8), material: Material | None = None) -> TriangleMesh:
    """Axis-aligned closed box with outward-facing triangles."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    corners = np.array([[hi[0] if i & 1 else lo[0], hi[1] if i & 2 else lo[1], hi[2] if i & 4 else lo[2]]
                        for i in range(8)])
    quads = [(0, 4, 6, 2), (1, 3, 7, 5),  # -x, +x
             (0, 1, 5, 4), (2, 6, 7, 3),  # -y, +y
             (0, 2, 3, 1), (4, 5, 7, 6)]  # -z, +z
    faces = []
    for a, b, c, d in quads:
        faces += [(a, b, c), (a, c, d)]
    colors = np.tile(np.asarray(color, dtype=np.float64), (8, 1)) if role == RECEIVER else None
    return TriangleMesh(corners, np.array(faces), colors, role, material)


def plane(center, half_size: float, color=(0.5, 0.5, 0.5), role: str = RECEIVER, y: float | None = None) -> TriangleMesh:
    """Horizontal square facing +Y."""
    cx, cy, cz = center
    s = half_size
    v = np.array([[cx - s, cy, cz - s], [cx + s, cy, cz - s], [cx + s, cy, cz + s], [cx - s, cy, cz + s]])
    faces = np.array([(0, 2, 1), (0, 3, 2)])
    colors = np.tile(np.asarray(color, dtype=np.float64), (4, 1))
    return TriangleMesh(v, faces, colors, role, None if role == RECEIVER else Material(tuple(color)))


def icosphere(center, radius: float, subdivisions: int = 3, role: str = OBJECT,
              color=(1.0, 1.0, 1.0), material: Material | None = None) -> TriangleMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        nxt = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nxt += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nxt
    v = np.asarray(center, dtype=np.float64) + radius * np.array(verts)
    colors = np.tile(np.asarray(color, dtype=np.float64), (len(v), 1)) if role == RECEIVER else None
    if role == OBJECT and material is None:
        material = Material(tuple(color), roughness=1.0, metallic=0.0)
    return TriangleMesh(v, np.array(faces), colors, role, material)
