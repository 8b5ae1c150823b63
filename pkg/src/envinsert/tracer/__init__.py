"""CPU path tracer with ray-type dependent receiver visibility."""
from .envsampler import EnvSampler, build_env_sampler
from .mesh import OBJECT, RECEIVER, Material, TriangleMesh, box, icosphere, load_obj, plane, save_obj
from .render import (Camera, CompiledScene, InsertionRenderSet, Interaction, Ray, RayType, RenderSettings,
                     Scene, compile_scene, effective_bsdf, ray_indicator, render_cubemap_at,
                     render_insertion_set, render_view, trace_path)

__all__ = [
    "Camera", "CompiledScene", "EnvSampler", "InsertionRenderSet", "Interaction", "Material", "OBJECT",
    "RECEIVER", "Ray", "RayType", "RenderSettings", "Scene", "TriangleMesh", "box", "build_env_sampler",
    "compile_scene", "effective_bsdf", "icosphere", "load_obj", "plane", "ray_indicator",
    "render_cubemap_at", "render_insertion_set", "render_view", "save_obj", "trace_path",
]
