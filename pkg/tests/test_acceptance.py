"""Acceptance suite: one test per numbered criterion, each printing a PASS/FAIL line."""
import hashlib
import json
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from envinsert import demo
from envinsert.compositor import ShadowRatioMap, ShapingParams, composite, shadow_ratio, shape_ratio
from envinsert.evalkit import psnr, ssim, vqa_ratio
from envinsert.fusion import Bracket, fuse_brackets
from envinsert.imagefiles import read_linear, read_png
from envinsert.panorama import FACE_NAMES, face_directions, pixel_center_directions, resample_cubemap, stitch_cubemap
from envinsert.pipeline import run_pipeline
from envinsert.radiometry import linear_to_srgb, luminance, simulate_underexposure
from envinsert.scene import parse_scene
from envinsert.tracer import (RECEIVER, Camera, Material, RenderSettings, Scene, box, icosphere, plane,
                              render_insertion_set, render_view)
from oracles import analytic_sky, floor_shadow_masks

GOLDEN = Path(__file__).parent / "golden" / "demo_composite.png"


@pytest.fixture(scope="module")
def demo_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("demo")
    scene_path = demo.write_demo_scene(root / "scene")
    run_pipeline(parse_scene(scene_path), "oracle", root / "run")
    return scene_path, root / "run"


def demo_masks(scene_path, margin_deg=3.0):
    cam = parse_scene(scene_path).cameras[0].camera
    return floor_shadow_masks(cam, 0.0, demo.FLOOR_HALF, demo.CUBE_LO, demo.CUBE_HI,
                              demo.cap_direction(), demo.CAP_RADIUS_DEG, margin_deg)


def synthetic_hdr(width=512, peak=60.0, seed=0):
    """Smooth sky with a sun lobe peaking at ``peak`` luminance and mild per-pixel chroma."""
    d = pixel_center_directions(width, width // 2)
    sun = np.array([0.4, 0.7, -0.59])
    sun /= np.linalg.norm(sun)
    cosang = d @ sun
    sky = 0.05 + 0.5 * np.clip(d[..., 1], 0, 1) + 0.1 * (1 + d[..., 0])
    lum = sky + (peak - sky.max()) * np.exp((cosang - 1.0) / 0.01)
    rng = np.random.default_rng(seed)
    chroma = 1.0 + rng.uniform(-0.05, 0.05, lum.shape + (3,))
    chroma /= luminance(chroma)[..., None]
    hdr = lum[..., None] * chroma
    return (hdr * peak / luminance(hdr).max()).astype(np.float32)


def test_criterion_1_fusion_round_trip(acceptance):
    hdr = synthetic_hdr()
    brackets = [Bracket(simulate_underexposure(hdr, ev), float(ev)) for ev in (-6, -3, 0)]
    t0 = time.perf_counter()
    fused = fuse_brackets(brackets)
    elapsed = time.perf_counter() - t0
    recoverable = np.all(hdr * 2.0 ** -6 < 1.0, axis=-1)
    rel = np.abs(luminance(fused.image).astype(np.float64) / luminance(hdr) - 1.0)
    worst = float(rel[recoverable].max())
    ok = (hdr.shape == (256, 512, 3) and float(luminance(hdr).max()) == pytest.approx(60.0, rel=1e-5)
          and worst <= 0.02 and fused.dynamic_range_stops >= 5.8 and elapsed < 5.0)
    acceptance(1, "HDR fusion oracle round trip", ok,
               f"max rel err {worst:.4%} on {int(recoverable.sum())} px, "
               f"{fused.dynamic_range_stops:.3f} stops, {elapsed:.2f}s")


def test_criterion_2_furnace(acceptance):
    sphere = icosphere((0, 0, 0), 1.0, 3, material=Material((1.0, 1.0, 1.0), 1.0, 0.0))
    cam = Camera((0, 0, 3.2), (0, 0, 0), resolution=(64, 64), vertical_fov=45)
    settings = RenderSettings(np.ones((32, 64, 3), np.float32), 256, 4, seed=0)
    t0 = time.perf_counter()
    full = render_view(Scene([], [sphere]), cam, settings, threads=1)
    elapsed = time.perf_counter() - t0
    alpha = render_view(Scene([], [sphere]), cam, RenderSettings(settings.env, 4), layer="object")[..., 3]
    inside = alpha == 1.0
    mean = float(full[inside].mean())
    ok = abs(mean - 1.0) <= 0.02 and inside.sum() > 1000 and elapsed < 60.0
    acceptance(2, "furnace test", ok, f"mean {mean:.4f} over {int(inside.sum())} px, {elapsed:.1f}s")


def test_criterion_3_enclosure(acceptance):
    env = demo.cap_env(256)
    floor = plane((0, 0, 0), demo.FLOOR_HALF, color=(0.6, 0.55, 0.5), role=RECEIVER)
    cube = box(demo.CUBE_LO, demo.CUBE_HI, material=Material((0.7, 0.25, 0.2), 0.6, 0.0))
    enclosure = box((-3, -1, -3), (3, 3, 3), role=RECEIVER, color=(0.5, 0.5, 0.5))
    cam = Camera((0, 2.2, 2.6), (0, 0.2, 0), resolution=(96, 72), vertical_fov=45)
    settings = RenderSettings(env, 64, 4, seed=1)
    boxed = render_insertion_set(Scene([floor, enclosure], [cube]), cam, settings)
    open_ = render_insertion_set(Scene([floor], [cube]), cam, settings)
    la = float(luminance(boxed.r1).mean())
    lb = float(luminance(open_.r1).mean())
    diff = abs(la / lb - 1.0)
    s = shadow_ratio(boxed.r0, boxed.r1).ratio.min(axis=-1)
    # footprint: floor points whose ray toward the cap center hits the cube
    inside, _, _ = floor_shadow_masks(cam, 0.0, demo.FLOOR_HALF, demo.CUBE_LO, demo.CUBE_HI,
                                      demo.cap_direction(), 0.0, margin_deg=0.0)
    _, outside, _ = floor_shadow_masks(cam, 0.0, demo.FLOOR_HALF, demo.CUBE_LO, demo.CUBE_HI,
                                       demo.cap_direction(), demo.CAP_RADIUS_DEG)
    s_in, s_out = float(s[inside].mean()), float(s[outside].mean())
    ok = diff <= 0.05 and inside.sum() > 20 and s_in <= 0.5 and s_out >= 0.95
    acceptance(3, "ray-decoupled enclosure", ok,
               f"luminance diff {diff:.2e}; S in footprint {s_in:.3f} ({int(inside.sum())} px), "
               f"outside {s_out:.4f} ({int(outside.sum())} px)")


def test_criterion_4_double_shadow_avoidance(acceptance, demo_run):
    _, run = demo_run
    r0 = read_linear(run / "render/main/R0.exr")
    bgs = {"tone-mapped R0": read_png(run / "composite/main/background.png"),
           "random photo": np.random.default_rng(0).integers(0, 256, r0.shape) / 255.0}
    worst = 0.0
    for bg in bgs.values():
        shaped = shape_ratio(shadow_ratio(r0, r0))  # R1 := R0
        out = composite(bg, np.zeros(r0.shape[:2] + (4,)), shaped, mask=np.zeros(r0.shape[:2]))
        q = np.round(out * 255.0)
        worst = max(worst, float(np.abs(q - np.round(bg * 255.0)).max()))
    acceptance(4, "double-shadow avoidance", worst <= 1.0, f"max deviation {worst:.0f}/255 on 100% of pixels")


def test_criterion_5_shaping_algebra(acceptance):
    rng = np.random.default_rng(5)
    s = rng.random((64, 64, 3))
    s[0, 0] = (0.0, 1.0, 0.5)
    ident = shape_ratio(ShadowRatioMap(s, None), ShapingParams(gamma_s=1.0, s_min=0.0, strength=1.0)).ratio
    exact = bool(np.array_equal(ident, s))
    n = 10_000
    bad_mono = bad_bound = 0
    gam = rng.uniform(1e-3, 1.0, n)
    smin = rng.uniform(0.0, 0.999, n)
    lam = rng.uniform(0.0, 1.0, n)
    a, b = rng.random(n), rng.random(n)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    for k in range(n):
        p = ShapingParams(gamma_s=gam[k], s_min=smin[k], strength=lam[k])
        out = shape_ratio(ShadowRatioMap(np.array([lo[k], hi[k]]), None), p).ratio
        bad_mono += int(out[0] > out[1])
        bad_bound += int(out.min() < 1.0 - lam[k] * (1.0 - smin[k]) - 1e-12 or out.max() > 1.0)
    ok = exact and bad_mono == 0 and bad_bound == 0
    acceptance(5, "shaping algebra", ok,
               f"identity bit-exact={exact}; {n} draws: {bad_mono} monotonicity and {bad_bound} bound violations")


def test_criterion_6_projection_round_trip(acceptance):
    n = 256

    def faces_of(fn):
        return {f: fn(face_directions(f, n) / np.linalg.norm(face_directions(f, n), axis=-1, keepdims=True))
                for f in FACE_NAMES}

    faces_sets = [faces_of(lambda d: np.clip(analytic_sky(d), 0, 1)),
                  resample_cubemap(linear_to_srgb(demo.cap_env(512)), n)]
    worst = 99.0
    for faces in faces_sets:
        back = resample_cubemap(stitch_cubemap(faces, 4 * n), n)
        worst = min(worst, min(psnr(np.clip(back[f], 0, 1), np.clip(faces[f], 0, 1)) for f in FACE_NAMES))

    def up_lobe(d):
        v = np.maximum(0.0, d[..., 1])
        return np.stack([v, v, v], axis=-1)

    lobe_faces = faces_of(up_lobe)
    analytic = psnr(stitch_cubemap(lobe_faces, 512), up_lobe(pixel_center_directions(512, 256)))
    ok = worst >= 35.0 and analytic >= 40.0
    acceptance(6, "projection round trip", ok,
               f"worst per-face round-trip PSNR {worst:.1f} dB at {n}^2; analytic stitch {analytic:.1f} dB at 512x256")


def _digest(run: Path) -> dict[str, str]:
    return {str(p.relative_to(run)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(run.rglob("*.exr"))}


def test_criterion_7_determinism(acceptance, demo_run, tmp_path):
    scene_path, _ = demo_run
    scene = parse_scene(scene_path)
    digests, manifests = [], []
    for threads in (1, 4, 8):
        for rep in range(2):
            out = tmp_path / f"t{threads}_{rep}"
            run_pipeline(scene, "oracle", out, threads=threads)
            digests.append(_digest(out))
            manifests.append((out / "manifest.json").read_bytes())
            if rep == 1:
                shutil.rmtree(out)
    same = all(d == digests[0] for d in digests) and all(m == manifests[0] for m in manifests)
    acceptance(7, "pipeline determinism", same and len(digests[0]) >= 10,
               f"{len(digests)} runs at 1/4/8 threads, {len(digests[0])} EXR files each, manifests identical={same}")


def test_criterion_8_metric_sanity(acceptance):
    z, h = np.zeros((16, 16, 3)), np.full((16, 16, 3), 0.5)
    p = psnr(z, h)
    a = np.random.default_rng(8).random((32, 32, 3))
    s = ssim(a, a)
    rng = np.random.default_rng(9)
    pairs = rng.uniform(0, 10, (1000, 2))
    worst = max(abs(vqa_ratio(x, y) + vqa_ratio(y, x) - 1.0) for x, y in pairs)
    ok = abs(p - 6.0206) <= 1e-3 and s == pytest.approx(1.0, abs=1e-12) and worst <= 1e-12
    acceptance(8, "metric sanity", ok, f"psnr {p:.4f} dB, ssim(a,a) {s:.12f}, vqa symmetry err {worst:.1e}")


def test_criterion_9_end_to_end_golden(acceptance, demo_run):
    scene_path, run = demo_run
    manifest = json.loads((run / "manifest.json").read_text())
    shaped = read_linear(run / "composite/main/shadow_shaped.exr").min(axis=-1)
    comp = read_png(run / "composite/main/composite.png")
    bg = read_png(run / "composite/main/background.png")
    umbra, clear, obj = demo_masks(scene_path)
    s_foot = float(shaped[umbra].max())
    dev = float(np.abs(comp - bg)[clear].max() * 255.0)
    golden_dev = float("nan")
    if GOLDEN.is_file():
        golden_dev = float(np.abs(read_png(GOLDEN) - comp).max() * 255.0)
    stages_ok = all(s in manifest["stages"] for s in ("cubemap", "stitch", "brackets", "fuse", "render", "composite"))
    ok = (stages_ok and umbra.sum() > 10 and s_foot < 0.9 and dev <= 2.0 + 1e-6
          and GOLDEN.is_file() and golden_dev <= 2.0)
    acceptance(9, "end-to-end golden", ok,
               f"max footprint S^ {s_foot:.3f} over {int(umbra.sum())} px; clear-region deviation {dev:.1f}/255 "
               f"over {int(clear.sum())} px; golden max diff {golden_dev:.0f}/255")
