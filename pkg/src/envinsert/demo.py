"""Desk-scale demo scene: a floor receiver, a cube and a bright-cap sky."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .imagefiles import write_exr
from .panorama import pixel_center_directions
from .tracer.mesh import OBJECT, RECEIVER, Material, box, plane, save_obj

CAP_DIRECTION = (0.55, 0.78, 0.30)
CAP_RADIUS_DEG = 8.0
CAP_RADIANCE = (40.0, 38.0, 34.0)
SKY_RADIANCE = (0.05, 0.06, 0.08)
GROUND_RADIANCE = (0.03, 0.03, 0.03)

CUBE_LO = (-0.3, 0.0, -0.3)
CUBE_HI = (0.3, 0.6, 0.3)
FLOOR_HALF = 2.5


def cap_direction(direction=CAP_DIRECTION) -> np.ndarray:
    d = np.asarray(direction, dtype=np.float64)
    return d / np.linalg.norm(d)


def cap_env(width: int = 256, direction=CAP_DIRECTION, radius_deg: float = CAP_RADIUS_DEG,
            cap=CAP_RADIANCE, sky=SKY_RADIANCE, ground=GROUND_RADIANCE) -> np.ndarray:
    """Equirect map with a uniform disk of radiance ``cap`` on a two-tone background.

    A pixel belongs to the cap when its center lies within ``radius_deg`` of
    ``direction``.
    """
    d = pixel_center_directions(width, width // 2)
    up = d[..., 1:2]
    env = np.where(up > 0, np.asarray(sky), np.asarray(ground)).astype(np.float64)
    inside = d @ cap_direction(direction) >= np.cos(np.radians(radius_deg))
    env[inside] = cap
    return env.astype(np.float32)


def demo_scene_dict() -> dict:
    return {
        "receiver_meshes": [{"path": "floor.obj"}],
        "object_meshes": [{"path": "cube.obj",
                           "material": {"base_color": [0.7, 0.25, 0.2], "roughness": 0.6, "metallic": 0.0}}],
        "environment": "env.exr",
        "insertion_point": [0.0, 0.3, 0.0],
        "cameras": [{"name": "main", "position": [0.0, 2.4, 3.4], "look_at": [0.0, 0.2, 0.0],
                     "up": [0, 1, 0], "vertical_fov": 40.0, "resolution": [96, 72]}],
        "render": {"samples_per_pixel": 64, "max_depth": 4, "seed": 7, "cubemap_resolution": 64,
                   "cubemap_samples_per_pixel": 4, "panorama_width": 256},
    }


def write_demo_scene(out_dir) -> Path:
    """Write meshes, environment and ``scene.json`` into ``out_dir``; returns the scene path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_obj(out / "floor.obj", plane((0.0, 0.0, 0.0), FLOOR_HALF, color=(0.6, 0.55, 0.5), role=RECEIVER))
    save_obj(out / "cube.obj", box(CUBE_LO, CUBE_HI, role=OBJECT, material=Material()))
    write_exr(out / "env.exr", cap_env())
    path = out / "scene.json"
    path.write_text(json.dumps(demo_scene_dict(), indent=2) + "\n")
    return path
