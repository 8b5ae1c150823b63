"""Strict JSON scene descriptions.

Every key is checked against a fixed schema; unknown keys are rejected so a
typo in a radiometric parameter fails loudly instead of falling back to a
default. Relative paths resolve against the scene file's directory.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .compositor import ShapingParams
from .errors import (EnvInsertError, MissingAssetError, MissingMeshError, SceneFileNotFoundError,
                     SceneParseError, SceneValidationError, SingularTransformError)
from .fusion import FusionParams
from .tracer.mesh import OBJECT, RECEIVER, Material, TriangleMesh, load_obj
from .tracer.render import Camera

IDENTITY = tuple(float(x) for x in np.eye(4).ravel())

_TOP = {"receiver_meshes", "object_meshes", "environment", "insertion_point", "cameras",
        "render", "shaping", "fusion", "background", "references"}
_REQUIRED = ("receiver_meshes", "object_meshes", "environment", "insertion_point", "cameras")
_MESH = {"path", "transform"}
_OBJECT_MESH = {"path", "transform", "material"}
_MATERIAL = {"base_color", "roughness", "metallic"}
_CAMERA = {"name", "position", "look_at", "up", "vertical_fov", "resolution"}
_RENDER = {"samples_per_pixel", "max_depth", "seed", "strategy", "cubemap_resolution",
           "cubemap_samples_per_pixel", "panorama_width"}
_SHAPING = {"gamma_s", "s_min", "lambda", "epsilon", "validity_bound"}
_FUSION = {"saturation_threshold", "blend_halfwidth", "epsilon", "gamma", "bracket_evs"}


@dataclass(frozen=True)
class MeshRef:
    path: Path
    transform: tuple[float, ...] = IDENTITY
    material: Material | None = None

    def load(self, role: str) -> TriangleMesh:
        mesh = load_obj(self.path, role, self.material if role == OBJECT else None)
        if self.transform != IDENTITY:
            mesh = mesh.transformed(np.reshape(self.transform, (4, 4)))
        return mesh


@dataclass(frozen=True)
class NamedCamera:
    name: str
    camera: Camera


@dataclass(frozen=True)
class RenderConfig:
    samples_per_pixel: int = 64
    max_depth: int = 4
    seed: int = 0
    strategy: str = "mis"
    cubemap_resolution: int = 64
    cubemap_samples_per_pixel: int = 4
    panorama_width: int = 256


@dataclass
class SceneDescription:
    source: Path
    receiver_meshes: list[MeshRef]
    object_meshes: list[MeshRef]
    environment: Path
    insertion_point: tuple[float, float, float]
    cameras: list[NamedCamera]
    render: RenderConfig = field(default_factory=RenderConfig)
    shaping: ShapingParams = field(default_factory=ShapingParams)
    fusion: FusionParams = field(default_factory=FusionParams)
    bracket_evs: tuple[float, ...] = (0.0, -3.0, -6.0)
    background: dict[str, Path] = field(default_factory=dict)
    references: dict[str, Path] = field(default_factory=dict)

    def snapshot(self) -> dict[str, Any]:
        """JSON-friendly copy of every parameter that affects outputs."""
        def mesh(m: MeshRef):
            d = {"path": str(m.path), "transform": list(m.transform)}
            if m.material is not None:
                d["material"] = {"base_color": list(m.material.base_color),
                                 "roughness": m.material.roughness, "metallic": m.material.metallic}
            return d
        return {
            "scene": str(self.source),
            "receiver_meshes": [mesh(m) for m in self.receiver_meshes],
            "object_meshes": [mesh(m) for m in self.object_meshes],
            "environment": str(self.environment),
            "insertion_point": list(self.insertion_point),
            "cameras": [{"name": c.name, "position": list(c.camera.position), "look_at": list(c.camera.look_at),
                         "up": list(c.camera.up), "vertical_fov": c.camera.vertical_fov,
                         "resolution": list(c.camera.resolution)} for c in self.cameras],
            "render": vars(self.render).copy(),
            "shaping": {"gamma_s": self.shaping.gamma_s, "s_min": self.shaping.s_min,
                        "lambda": self.shaping.strength, "epsilon": self.shaping.epsilon,
                        "validity_bound": self.shaping.validity_bound},
            "fusion": {"saturation_threshold": self.fusion.saturation_threshold,
                       "blend_halfwidth": self.fusion.blend_halfwidth, "epsilon": self.fusion.epsilon,
                       "gamma": self.fusion.transfer.gamma, "bracket_evs": list(self.bracket_evs)},
            "background": {k: str(v) for k, v in sorted(self.background.items())},
            "references": {k: str(v) for k, v in sorted(self.references.items())},
        }


def _fail(where: str, msg: str):
    raise SceneValidationError(f"{where}: {msg}")


def _obj(value, where: str, allowed: set[str]) -> dict:
    if not isinstance(value, dict):
        _fail(where, f"expected an object, got {type(value).__name__}")
    unknown = sorted(set(value) - allowed)
    if unknown:
        _fail(where, f"unknown key(s) {', '.join(repr(k) for k in unknown)}")
    return value


def _num(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
        _fail(where, f"expected a finite number, got {value!r}")
    return float(value)


def _int(value, where: str, lo: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < lo:
        _fail(where, f"expected an integer >= {lo}, got {value!r}")
    return value


def _vec(value, where: str, n: int) -> tuple[float, ...]:
    if not isinstance(value, list) or len(value) != n:
        _fail(where, f"expected a list of {n} numbers, got {value!r}")
    return tuple(_num(x, f"{where}[{i}]") for i, x in enumerate(value))


def _path(value, where: str, base: Path) -> Path:
    if not isinstance(value, str) or not value:
        _fail(where, f"expected a path string, got {value!r}")
    p = Path(value)
    return p if p.is_absolute() else (base / p).resolve()


def _transform(value, where: str) -> tuple[float, ...]:
    if value is None:
        return IDENTITY
    if isinstance(value, list) and len(value) == 4 and all(isinstance(r, list) for r in value):
        value = [x for row in value for x in row]
    t = _vec(value, where, 16)
    det = np.linalg.det(np.reshape(t, (4, 4))[:3, :3])
    if not abs(det) > 1e-9:
        raise SingularTransformError(f"{where}: transform is singular (det={det:.3g})")
    return t


def _material(value, where: str) -> Material:
    d = _obj(value, where, _MATERIAL)
    kw = {}
    if "base_color" in d:
        kw["base_color"] = _vec(d["base_color"], f"{where}.base_color", 3)
    for k in ("roughness", "metallic"):
        if k in d:
            kw[k] = _num(d[k], f"{where}.{k}")
    try:
        return Material(**kw)
    except EnvInsertError as exc:
        _fail(where, str(exc))


def _meshes(value, where: str, base: Path, with_material: bool) -> list[MeshRef]:
    if not isinstance(value, list) or not value:
        _fail(where, "expected a non-empty list")
    out = []
    for i, item in enumerate(value):
        w = f"{where}[{i}]"
        d = _obj(item, w, _OBJECT_MESH if with_material else _MESH)
        if "path" not in d:
            _fail(w, "missing required field 'path'")
        path = _path(d["path"], f"{w}.path", base)
        if not path.is_file():
            raise MissingMeshError(f"{w}.path: mesh file not found: {path}")
        mat = _material(d["material"], f"{w}.material") if with_material and "material" in d else None
        if with_material and mat is None:
            mat = Material()
        out.append(MeshRef(path, _transform(d.get("transform"), f"{w}.transform"), mat))
    return out


def _cameras(value, where: str) -> list[NamedCamera]:
    if not isinstance(value, list) or not value:
        _fail(where, "expected a non-empty list")
    out, names = [], set()
    for i, item in enumerate(value):
        w = f"{where}[{i}]"
        d = _obj(item, w, _CAMERA)
        for k in ("position", "look_at"):
            if k not in d:
                _fail(w, f"missing required field {k!r}")
        name = d.get("name", f"cam{i}")
        if not isinstance(name, str) or not name or "/" in name or name in names:
            _fail(f"{w}.name", f"camera names must be unique non-empty strings without '/', got {name!r}")
        names.add(name)
        res = d.get("resolution", [64, 64])
        if not isinstance(res, list) or len(res) != 2:
            _fail(f"{w}.resolution", f"expected [width, height], got {res!r}")
        try:
            cam = Camera(_vec(d["position"], f"{w}.position", 3), _vec(d["look_at"], f"{w}.look_at", 3),
                         _vec(d.get("up", [0, 1, 0]), f"{w}.up", 3),
                         _num(d.get("vertical_fov", 45.0), f"{w}.vertical_fov"),
                         (_int(res[0], f"{w}.resolution[0]"), _int(res[1], f"{w}.resolution[1]")))
        except SceneValidationError:
            raise
        except EnvInsertError as exc:
            _fail(w, str(exc))
        out.append(NamedCamera(name, cam))
    return out


def _render(value) -> RenderConfig:
    d = _obj(value, "render", _RENDER)
    kw: dict[str, Any] = {}
    for k in ("samples_per_pixel", "max_depth", "cubemap_resolution", "cubemap_samples_per_pixel",
              "panorama_width"):
        if k in d:
            kw[k] = _int(d[k], f"render.{k}")
    if "seed" in d:
        kw["seed"] = _int(d["seed"], "render.seed", lo=0)
    if "strategy" in d:
        if d["strategy"] not in ("mis", "bsdf"):
            _fail("render.strategy", f"expected 'mis' or 'bsdf', got {d['strategy']!r}")
        kw["strategy"] = d["strategy"]
    cfg = RenderConfig(**kw)
    if cfg.panorama_width % 2:
        _fail("render.panorama_width", "must be even (2:1 panorama)")
    return cfg


def _shaping(value) -> ShapingParams:
    d = _obj(value, "shaping", _SHAPING)
    names = {"gamma_s": "gamma_s", "s_min": "s_min", "lambda": "strength",
             "epsilon": "epsilon", "validity_bound": "validity_bound"}
    kw = {names[k]: _num(v, f"shaping.{k}") for k, v in d.items()}
    try:
        return ShapingParams(**kw)
    except EnvInsertError as exc:
        _fail("shaping", str(exc))


def _fusion(value) -> tuple[FusionParams, tuple[float, ...] | None]:
    from .radiometry import TransferParams
    d = _obj(value, "fusion", _FUSION)
    kw: dict[str, Any] = {}
    for k in ("saturation_threshold", "blend_halfwidth", "epsilon"):
        if k in d:
            kw[k] = _num(d[k], f"fusion.{k}")
    evs = None
    if "bracket_evs" in d:
        v = d["bracket_evs"]
        if not isinstance(v, list) or not v:
            _fail("fusion.bracket_evs", "expected a non-empty list of EV stops")
        evs = tuple(_num(x, f"fusion.bracket_evs[{i}]") for i, x in enumerate(v))
        if 0.0 not in evs or len(set(evs)) != len(evs) or max(evs) > 0:
            _fail("fusion.bracket_evs", "must be distinct, non-positive and include 0")
    try:
        if "gamma" in d:
            kw["transfer"] = TransferParams(_num(d["gamma"], "fusion.gamma"))
        return FusionParams(**kw), evs
    except EnvInsertError as exc:
        _fail("fusion", str(exc))


def _per_camera(value, where: str, base: Path, cams: list[NamedCamera]) -> dict[str, Path]:
    names = [c.name for c in cams]
    d = _obj(value, where, set(names))
    out = {}
    for k, v in d.items():
        p = _path(v, f"{where}.{k}", base)
        if not p.is_file():
            raise MissingAssetError(f"{where}.{k}: file not found: {p}")
        out[k] = p
    return out


def scene_from_dict(data, base: Path, source: Path | None = None) -> SceneDescription:
    d = _obj(data, "scene", _TOP)
    for k in _REQUIRED:
        if k not in d:
            _fail("scene", f"missing required field {k!r}")
    receivers = _meshes(d["receiver_meshes"], "receiver_meshes", base, False)
    objects = _meshes(d["object_meshes"], "object_meshes", base, True)
    env = _path(d["environment"], "environment", base)
    if not env.is_file():
        raise MissingAssetError(f"environment: file not found: {env}")
    if env.suffix.lower() not in (".exr", ".pfm"):
        _fail("environment", f"expected an .exr or .pfm file, got {env.name}")
    point = _vec(d["insertion_point"], "insertion_point", 3)
    cams = _cameras(d["cameras"], "cameras")
    fusion, evs = _fusion(d.get("fusion", {}))
    desc = SceneDescription(
        source=source or base, receiver_meshes=receivers, object_meshes=objects, environment=env,
        insertion_point=point, cameras=cams, render=_render(d.get("render", {})),
        shaping=_shaping(d.get("shaping", {})), fusion=fusion,
        background=_per_camera(d.get("background", {}), "background", base, cams),
        references=_per_camera(d.get("references", {}), "references", base, cams))
    if evs is not None:
        desc.bracket_evs = evs
    return desc


def parse_scene(path) -> SceneDescription:
    path = Path(path)
    if not path.is_file():
        raise SceneFileNotFoundError(f"scene file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SceneParseError(f"{path}: malformed JSON: {exc}") from exc
    try:
        return scene_from_dict(data, path.resolve().parent, path.resolve())
    except EnvInsertError as exc:
        exc.args = (f"{path}: {exc}",)
        raise


def load_scene_meshes(desc: SceneDescription):
    """Load and transform every mesh; returns a tracer ``Scene``."""
    from .tracer.render import Scene
    return Scene([m.load(RECEIVER) for m in desc.receiver_meshes],
                 [m.load(OBJECT) for m in desc.object_meshes])
