"""End-to-end run: cubemap -> panorama -> brackets -> fusion -> insertion renders -> composite -> eval.

Every stage reads and writes plain files under ``out_dir`` and is recorded in
the manifest with paths relative to ``out_dir``, so any prefix of the run can
be replayed with the individual CLI subcommands.
"""
from __future__ import annotations

import json
import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Mapping

from . import __version__
from .compositor import composite, shadow_ratio, shape_ratio
from .errors import EnvInsertError, InvalidInputError, MissingAssetError, StageError
from .evalkit import evaluate
from .fusion import Bracket, fuse_brackets
from .imagefiles import read_image, read_linear, read_png, write_exr, write_png
from .panorama import FACE_NAMES, stitch_cubemap
from .radiometry import linear_to_srgb, simulate_underexposure
from .scene import SceneDescription, load_scene_meshes
from .tracer.envsampler import build_env_sampler
from .tracer.render import RenderSettings, compile_scene, render_cubemap_at, render_insertion_set

log = logging.getLogger(__name__)

FACE_FILES = {"+X": "posx", "-X": "negx", "+Y": "posy", "-Y": "negy", "+Z": "posz", "-Z": "negz"}
STAGES = ("cubemap", "stitch", "brackets", "fuse", "render", "composite", "eval")


def bracket_name(ev: float) -> str:
    return f"ev{ev:+g}".replace("+", "p").replace("-", "m")


@contextmanager
def _stage(name: str):
    log.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except (EnvInsertError, OSError, ValueError) as exc:
        raise StageError(name, str(exc)) from exc


class _Run:
    def __init__(self, out_dir: Path):
        self.out = out_dir
        self.stages: dict[str, dict] = {}

    def path(self, rel: str) -> Path:
        p = self.out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def record(self, stage: str, key: str, rel):
        self.stages.setdefault(stage, {})[key] = rel


def _write_manifest(run: _Run, scene: SceneDescription, seed: int, mode: str, extra: dict) -> Path:
    manifest = {
        "version": __version__,
        "seed": seed,
        "bracket_mode": mode,
        "parameters": scene.snapshot(),
        "stages": run.stages,
        **extra,
    }
    path = run.out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def run_pipeline(scene: SceneDescription, bracket_mode: str = "oracle", out_dir=".",
                 *, external_brackets: Mapping[float, str] | None = None, threads: int = 1,
                 seed: int | None = None) -> dict:
    """Run every stage and return the manifest dict (also written to ``out_dir/manifest.json``).

    In ``external`` mode ``external_brackets`` maps each non-zero EV of the
    scene's bracket list to an sRGB panorama file; the EV 0 image is always the
    rendered base panorama unless an entry for 0 is given.
    """
    if bracket_mode not in ("oracle", "external"):
        raise InvalidInputError(f"bracket_mode must be 'oracle' or 'external', got {bracket_mode!r}")
    if bracket_mode == "external" and not external_brackets:
        raise InvalidInputError("external bracket mode needs bracket paths")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(out)
    seed = scene.render.seed if seed is None else int(seed)
    cfg = scene.render
    extra: dict = {}
    try:
        _run_stages(scene, bracket_mode, run, seed, cfg, external_brackets or {}, threads, extra)
    except StageError as exc:
        extra["failed_stage"] = exc.stage
        extra["error"] = str(exc)
        _write_manifest(run, scene, seed, bracket_mode, extra)
        raise
    _write_manifest(run, scene, seed, bracket_mode, extra)
    return json.loads((out / "manifest.json").read_text())


def _run_stages(scene, mode, run: _Run, seed, cfg, external, threads, extra):
    with _stage("cubemap"):
        env = read_linear(scene.environment)
        compiled = compile_scene(load_scene_meshes(scene))
        settings = RenderSettings(env[..., :3], cfg.cubemap_samples_per_pixel, cfg.max_depth, seed, cfg.strategy)
        linear_faces = render_cubemap_at(compiled, scene.insertion_point, cfg.cubemap_resolution, settings,
                                         threads=threads, tonemap=False)
        faces = {}
        for name in FACE_NAMES:
            faces[name] = linear_to_srgb(linear_faces[name], scene.fusion.transfer)
            rel = f"cubemap/{FACE_FILES[name]}.png"
            write_png(run.path(rel), faces[name])
            run.record("cubemap", FACE_FILES[name], rel)
            rel = f"cubemap/linear/{FACE_FILES[name]}.exr"
            write_exr(run.path(rel), linear_faces[name])
            run.record("cubemap", f"{FACE_FILES[name]}_linear", rel)

    with _stage("stitch"):
        faces = {n: read_png(run.out / run.stages["cubemap"][FACE_FILES[n]]) for n in FACE_NAMES}
        pano = stitch_cubemap(faces, cfg.panorama_width)
        write_png(run.path("panorama/ev0.png"), pano)
        run.record("stitch", "ev0", "panorama/ev0.png")
        lin_faces = {n: read_linear(run.out / run.stages["cubemap"][f"{FACE_FILES[n]}_linear"]) for n in FACE_NAMES}
        write_exr(run.path("panorama/linear.exr"), stitch_cubemap(lin_faces, cfg.panorama_width))
        run.record("stitch", "linear", "panorama/linear.exr")

    with _stage("brackets"):
        evs = sorted(scene.bracket_evs)
        if mode == "oracle":
            hdr = read_linear(run.out / "panorama/linear.exr")
            for ev in evs:
                if ev == 0.0:
                    run.record("brackets", bracket_name(ev), "panorama/ev0.png")
                    continue
                rel = f"brackets/{bracket_name(ev)}.png"
                write_png(run.path(rel), simulate_underexposure(hdr, ev, scene.fusion.transfer))
                run.record("brackets", bracket_name(ev), rel)
        else:
            for ev in evs:
                src = external.get(ev)
                if src is None and ev == 0.0:
                    run.record("brackets", bracket_name(ev), "panorama/ev0.png")
                    continue
                if src is None:
                    raise InvalidInputError(f"no external bracket given for EV {ev:g}")
                run.record("brackets", bracket_name(ev), str(Path(src).resolve()))

    with _stage("fuse"):
        seq = []
        for ev in sorted(scene.bracket_evs):
            p = run.out / run.stages["brackets"][bracket_name(ev)]
            if not p.is_file():
                raise MissingAssetError(f"bracket for EV {ev:g} not found: {p}")
            img, linear = read_image(p)
            seq.append(Bracket(linear_to_srgb(img) if linear else img[..., :3], ev))
        fused = fuse_brackets(seq, scene.fusion)
        write_exr(run.path("fused/env.exr"), fused.image)
        run.record("fuse", "environment", "fused/env.exr")
        extra["dynamic_range_stops"] = round(fused.dynamic_range_stops, 6)

    renders = {}
    with _stage("render"):
        env = read_linear(run.out / "fused/env.exr")[..., :3]
        settings = RenderSettings(env, cfg.samples_per_pixel, cfg.max_depth, seed, cfg.strategy)
        sampler = build_env_sampler(env)
        for nc in scene.cameras:
            rs = render_insertion_set(compiled, nc.camera, settings, threads=threads, sampler=sampler)
            renders[nc.name] = rs
            for key, img in (("R0", rs.r0), ("R1", rs.r1), ("O", rs.obj)):
                rel = f"render/{nc.name}/{key}.exr"
                write_exr(run.path(rel), img)
                run.record("render", f"{nc.name}/{key}", rel)

    with _stage("composite"):
        for nc in scene.cameras:
            rec = run.stages["render"]
            r0 = read_linear(run.out / rec[f"{nc.name}/R0"])
            r1 = read_linear(run.out / rec[f"{nc.name}/R1"])
            obj = read_linear(run.out / rec[f"{nc.name}/O"])
            if nc.name in scene.background:
                bg, linear = read_image(scene.background[nc.name])
                bg = linear_to_srgb(bg[..., :3]) if linear else bg[..., :3]
            else:
                bg = linear_to_srgb(r0, scene.fusion.transfer)
            rel_bg = f"composite/{nc.name}/background.png"
            write_png(run.path(rel_bg), bg)
            # composite from the quantized file so the stage can be replayed from disk
            bg = read_png(run.out / rel_bg)
            s = shadow_ratio(r0, r1, scene.shaping)
            shaped = shape_ratio(s, scene.shaping)
            out = composite(bg, obj, shaped, transfer=scene.fusion.transfer)
            for key, rel, img, fn in (
                ("background", rel_bg, None, None),
                ("shadow_ratio", f"composite/{nc.name}/shadow_ratio.exr", s.ratio, write_exr),
                ("shadow_shaped", f"composite/{nc.name}/shadow_shaped.exr", shaped.ratio, write_exr),
                ("composite", f"composite/{nc.name}/composite.png", out, write_png),
            ):
                if fn is not None:
                    fn(run.path(rel), img)
                run.record("composite", f"{nc.name}/{key}", rel)

    if scene.references:
        with _stage("eval"):
            metrics = {}
            for nc in scene.cameras:
                ref_path = scene.references.get(nc.name)
                if ref_path is None:
                    continue
                ref, linear = read_image(ref_path)
                ref = linear_to_srgb(ref[..., :3]) if linear else ref[..., :3]
                pred = read_png(run.out / run.stages["composite"][f"{nc.name}/composite"])
                metrics[nc.name] = evaluate(pred, ref).to_dict()
            write_json = run.path("eval/metrics.json")
            write_json.write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
            run.record("eval", "metrics", "eval/metrics.json")
