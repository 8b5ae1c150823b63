"""Scene assembly and the rendering entry points."""
from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import InvalidInputError
from ..panorama import FACE_AXES, FACE_NAMES
from ..radiometry import TransferParams, linear_to_srgb
from . import kernels
from .bvh import build_bvh
from .envsampler import EnvSampler, build_env_sampler
from .mesh import OBJECT, RECEIVER, Material, TriangleMesh
from .rng import seed_to_u64

log = logging.getLogger(__name__)

TILE_ROWS = 4


class RayType(enum.IntEnum):
    CAMERA = kernels.CAMERA
    SHADOW = kernels.SHADOW
    DIFFUSE = kernels.DIFFUSE
    GLOSSY = kernels.GLOSSY
    TRANSMISSION = kernels.TRANSMISSION


class Interaction(enum.IntEnum):
    PASS = kernels.PASS  # continue unchanged: direction, throughput and ray type kept
    OCCLUDE = kernels.OCCLUDE  # shadow ray blocked
    SHADE = kernels.SHADE  # opaque Lambertian with vertex-color albedo


def ray_indicator(ray_type: RayType) -> int:
    """1 for shadow and diffuse rays, 0 for camera, glossy and transmission rays."""
    return int(kernels.ray_indicator(int(ray_type)))


def effective_bsdf(ray_type: RayType, front_facing: bool = True,
                   camera_sees_receivers: bool = False) -> Interaction:
    """How a receiver surface treats an incoming ray.

    The indicator selects between the opaque diffuse material and a perfectly
    transparent one, so the blend collapses to a branch. Back faces are always
    transparent. ``camera_sees_receivers`` makes primary rays stop on receivers;
    the insertion renders use it so the receiver itself is what they image.
    """
    return Interaction(kernels.receiver_interaction(int(ray_type), bool(front_facing),
                                                    bool(camera_sees_receivers)))


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    ray_type: RayType = RayType.CAMERA
    depth: int = 0

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        d = np.asarray(self.direction, dtype=np.float64)
        n = np.linalg.norm(d)
        if n == 0:
            raise InvalidInputError("ray direction must be nonzero")
        self.direction = d / n
        if self.depth < 0:
            raise InvalidInputError("ray depth must be >= 0")


@dataclass(frozen=True)
class Camera:
    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 1.0, 0.0)
    vertical_fov: float = 45.0
    resolution: tuple[int, int] = (64, 64)

    def __post_init__(self):
        if not 0.0 < self.vertical_fov < 180.0:
            raise InvalidInputError(f"vertical_fov must be in (0, 180), got {self.vertical_fov}")
        w, h = self.resolution
        if w < 1 or h < 1:
            raise InvalidInputError(f"camera resolution must be positive, got {self.resolution}")
        f = np.subtract(self.look_at, self.position)
        if np.linalg.norm(f) == 0:
            raise InvalidInputError("camera look_at coincides with its position")
        if np.linalg.norm(np.cross(f, self.up)) < 1e-9 * np.linalg.norm(f) * np.linalg.norm(self.up):
            raise InvalidInputError("camera up vector is parallel to the view direction")

    def kernel_array(self) -> np.ndarray:
        f = np.subtract(self.look_at, self.position).astype(np.float64)
        f /= np.linalg.norm(f)
        r = np.cross(f, self.up)
        r /= np.linalg.norm(r)
        u = np.cross(r, f)
        tan_half = np.tan(np.radians(self.vertical_fov) / 2.0)
        return np.r_[np.asarray(self.position, dtype=np.float64), f, r, u, tan_half]


@dataclass
class RenderSettings:
    env: np.ndarray
    samples_per_pixel: int = 16
    max_depth: int = 4
    seed: int = 0
    strategy: str = "mis"  # "mis" (light + BSDF sampling) or "bsdf"

    def __post_init__(self):
        if self.samples_per_pixel < 1 or self.max_depth < 1:
            raise InvalidInputError("samples_per_pixel and max_depth must be >= 1")
        if self.strategy not in ("mis", "bsdf"):
            raise InvalidInputError(f"unknown strategy {self.strategy!r}")
        env = np.asarray(self.env)
        if env.ndim != 3 or env.shape[1] != 2 * env.shape[0]:
            raise InvalidInputError(f"environment must be a 2:1 equirect map, got {env.shape}")


@dataclass
class Scene:
    receivers: list[TriangleMesh] = field(default_factory=list)
    objects: list[TriangleMesh] = field(default_factory=list)

    def __post_init__(self):
        for m in self.receivers:
            if m.role != RECEIVER:
                raise InvalidInputError("receiver list holds a mesh whose role is not 'receiver'")
        for m in self.objects:
            if m.role != OBJECT:
                raise InvalidInputError("object list holds a mesh whose role is not 'object'")


@dataclass
class CompiledScene:
    tris: np.ndarray
    tri_colors: np.ndarray
    tri_info: np.ndarray
    mats: np.ndarray
    bounds: np.ndarray
    nodes: np.ndarray
    eps: float
    has_objects: bool

    def kernel_args(self) -> tuple:
        return (self.tris, self.tri_colors, self.tri_info, self.mats, self.bounds, self.nodes)


@dataclass
class InsertionRenderSet:
    r0: np.ndarray  # receiver only, linear RGB
    r1: np.ndarray  # receiver + object, linear RGB
    obj: np.ndarray  # object layer, linear premultiplied RGBA


def compile_scene(scene: Scene) -> CompiledScene:
    v0s, v1s, v2s, cols, info, mats = [], [], [], [], [], []
    for role_id, meshes in ((kernels.ROLE_RECEIVER, scene.receivers), (kernels.ROLE_OBJECT, scene.objects)):
        for mesh in meshes:
            v = mesh.vertices[mesh.faces]
            v0s.append(v[:, 0])
            v1s.append(v[:, 1])
            v2s.append(v[:, 2])
            if mesh.colors is not None:
                cols.append(mesh.colors[mesh.faces].reshape(-1, 9))
            else:
                cols.append(np.zeros((len(mesh.faces), 9)))
            mat_id = -1
            if role_id == kernels.ROLE_OBJECT:
                m = mesh.material or Material()
                mats.append([*m.base_color, m.roughness, m.metallic])
                mat_id = len(mats) - 1
            info.append(np.tile([role_id, mat_id], (len(mesh.faces), 1)))
    if v0s:
        v0, v1, v2 = np.concatenate(v0s), np.concatenate(v1s), np.concatenate(v2s)
        colors = np.concatenate(cols)
        tri_info = np.concatenate(info).astype(np.int32)
    else:
        v0 = v1 = v2 = np.zeros((0, 3))
        colors = np.zeros((0, 9))
        tri_info = np.zeros((0, 2), dtype=np.int32)
    bvh = build_bvh(v0, v1, v2)
    v0, v1, v2 = v0[bvh.order], v1[bvh.order], v2[bvh.order]
    e1, e2 = v1 - v0, v2 - v0
    n = np.cross(e1, e2)
    n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)
    tris = np.ascontiguousarray(np.concatenate([v0, e1, e2, n], axis=1))
    if len(v0):
        pts = np.concatenate([v0, v1, v2])
        diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    else:
        diag = 0.0
    return CompiledScene(
        tris=tris,
        tri_colors=np.ascontiguousarray(colors[bvh.order]),
        tri_info=np.ascontiguousarray(tri_info[bvh.order]),
        mats=np.asarray(mats, dtype=np.float64).reshape(-1, 5),
        bounds=np.ascontiguousarray(bvh.bounds),
        nodes=np.ascontiguousarray(bvh.nodes),
        eps=1e-4 * diag if diag > 0 else 1e-4,
        has_objects=bool(scene.objects),
    )


def _prepare(scene, settings: RenderSettings, sampler: EnvSampler | None):
    compiled = scene if isinstance(scene, CompiledScene) else compile_scene(scene)
    if sampler is None:
        sampler = build_env_sampler(settings.env)
    return compiled, sampler


def render_raw(scene, cam: np.ndarray, width: int, height: int, settings: RenderSettings, *,
               include_objects: bool = True, camera_sees_receivers: bool = True, threads: int = 1,
               sampler: EnvSampler | None = None) -> np.ndarray:
    """Run the tile kernel; returns (H, W, 7) float64 (rgb, premultiplied object rgb, alpha)."""
    if width < 1 or height < 1:
        raise InvalidInputError(f"render resolution must be positive, got {width}x{height}")
    compiled, sampler = _prepare(scene, settings, sampler)
    out = np.zeros((height, width, kernels.OUT_CHANNELS))
    tiles = [(y, min(y + TILE_ROWS, height)) for y in range(0, height, TILE_ROWS)]
    diags = [np.zeros(1, dtype=np.int64) for _ in tiles]
    strategy = kernels.STRATEGY_MIS if settings.strategy == "mis" else kernels.STRATEGY_BSDF
    seed = seed_to_u64(settings.seed)

    def work(k):
        y0, y1 = tiles[k]
        kernels.render_rows(y0, y1, out, diags[k], cam, width, height, settings.samples_per_pixel,
                            settings.max_depth, seed, strategy, include_objects, camera_sees_receivers,
                            compiled.eps, *compiled.kernel_args(), *sampler.kernel_args())

    if threads <= 1:
        for k in range(len(tiles)):
            work(k)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(len(tiles))))
    bad = int(sum(d[0] for d in diags))
    if bad:
        log.warning("%d path samples produced non-finite radiance and were zeroed", bad)
    return out


def render_view(scene, camera: Camera, settings: RenderSettings, include_object: bool = True,
                layer: str = "full", *, threads: int = 1, camera_sees_receivers: bool = True,
                sampler: EnvSampler | None = None) -> np.ndarray:
    """Render one view. ``layer='full'`` gives linear RGB, ``'object'`` premultiplied RGBA."""
    if layer not in ("full", "object"):
        raise InvalidInputError(f"layer must be 'full' or 'object', got {layer!r}")
    w, h = camera.resolution
    cam = camera.kernel_array()
    raw = render_raw(scene, cam, w, h, settings, include_objects=include_object or layer == "object",
                     camera_sees_receivers=camera_sees_receivers, threads=threads, sampler=sampler)
    if layer == "full":
        return raw[..., 0:3].astype(np.float32)
    return raw[..., 3:7].astype(np.float32)


def render_insertion_set(scene, camera: Camera, settings: RenderSettings, *, threads: int = 1,
                         sampler: EnvSampler | None = None) -> InsertionRenderSet:
    """R0 without objects, R1 with them, and the object layer, all on one sample stream."""
    if isinstance(scene, Scene) and (not scene.receivers or not scene.objects):
        raise InvalidInputError("insertion renders need at least one receiver and one object mesh")
    compiled, sampler = _prepare(scene, settings, sampler)
    w, h = camera.resolution
    cam = camera.kernel_array()
    with_obj = render_raw(compiled, cam, w, h, settings, include_objects=True, threads=threads, sampler=sampler)
    without = render_raw(compiled, cam, w, h, settings, include_objects=False, threads=threads, sampler=sampler)
    return InsertionRenderSet(r0=without[..., 0:3].astype(np.float32),
                              r1=with_obj[..., 0:3].astype(np.float32),
                              obj=with_obj[..., 3:7].astype(np.float32))


def face_camera(face: str, point, face_resolution: int) -> Camera:
    forward, up = FACE_AXES[face]
    p = np.asarray(point, dtype=np.float64)
    return Camera(tuple(p), tuple(p + forward), up, 90.0, (face_resolution, face_resolution))


def render_cubemap_at(scene, point, face_resolution: int, settings: RenderSettings, *, threads: int = 1,
                      tonemap: bool = True, transfer: TransferParams = TransferParams(),
                      sampler: EnvSampler | None = None) -> dict[str, np.ndarray]:
    """Six 90-degree views from ``point``; objects excluded, receivers transparent to camera rays.

    With ``tonemap`` the faces are clipped EV0 sRGB, otherwise linear radiance.
    """
    compiled, sampler = _prepare(scene, settings, sampler)
    faces = {}
    for name in FACE_NAMES:
        cam = face_camera(name, point, face_resolution)
        img = render_view(compiled, cam, settings, include_object=False, threads=threads,
                          camera_sees_receivers=False, sampler=sampler)
        faces[name] = linear_to_srgb(img, transfer) if tonemap else img
    return faces


def trace_path(ray: Ray, scene, settings: RenderSettings, pixel: int = 0, sample: int = 0, *,
               include_objects: bool = True, camera_sees_receivers: bool = True,
               sampler: EnvSampler | None = None) -> np.ndarray:
    """Radiance estimate along a single ray (one sample of the estimator)."""
    compiled, sampler = _prepare(scene, settings, sampler)
    strategy = kernels.STRATEGY_MIS if settings.strategy == "mis" else kernels.STRATEGY_BSDF
    stack = np.empty(kernels.STACK_SIZE, dtype=np.int32)
    o, d = ray.origin, ray.direction
    r, g, b, _ = kernels.trace_path(o[0], o[1], o[2], d[0], d[1], d[2], int(ray.ray_type),
                                    seed_to_u64(settings.seed), pixel, sample,
                                    compiled.tris, compiled.tri_colors, compiled.tri_info, compiled.mats,
                                    compiled.bounds, compiled.nodes, stack, *sampler.kernel_args(),
                                    settings.max_depth, strategy, include_objects, camera_sees_receivers,
                                    compiled.eps)
    return np.array([r, g, b])


def scene_from_meshes(meshes: Sequence[TriangleMesh]) -> Scene:
    return Scene([m for m in meshes if m.role == RECEIVER], [m for m in meshes if m.role == OBJECT])
