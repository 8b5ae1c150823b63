"""Command-line interface: one subcommand per stage plus the full pipeline."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .compositor import ShapingParams, composite, shadow_ratio, shape_ratio
from .errors import EnvInsertError, InvalidInputError, MissingAssetError
from .evalkit import evaluate
from .fusion import Bracket, FusionParams, fuse_brackets
from .imagefiles import is_linear_path, read_image, read_linear, write_exr, write_linear, write_png
from .panorama import stitch_cubemap
from .radiometry import linear_to_srgb, simulate_underexposure

log = logging.getLogger("envinsert")

FACE_FLAGS = (("posx", "+X"), ("negx", "-X"), ("posy", "+Y"), ("negy", "-Y"), ("posz", "+Z"), ("negz", "-Z"))


def _need(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise MissingAssetError(f"file not found: {p}")
    return p


def _out_path(args, path) -> Path:
    p = Path(path)
    if not p.is_absolute():
        p = Path(args.out_dir) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _srgb(path) -> np.ndarray:
    img, linear = read_image(_need(path))
    return linear_to_srgb(img[..., :3]) if linear else img[..., :3]


def _save(path: Path, img) -> None:
    if is_linear_path(path):
        write_linear(path, img)
    elif path.suffix.lower() == ".png":
        write_png(path, img)
    else:
        raise InvalidInputError(f"{path}: output must be .png, .exr or .pfm")


def _parse_bracket(text: str) -> tuple[str, float]:
    path, sep, ev = text.rpartition(":")
    if not sep or not path:
        raise InvalidInputError(f"--bracket expects <path>:<ev>, got {text!r}")
    try:
        return path, float(ev)
    except ValueError:
        raise InvalidInputError(f"--bracket EV is not a number in {text!r}") from None


def cmd_stitch(args) -> int:
    faces = {}
    for flag, name in FACE_FLAGS:
        img, linear = read_image(_need(getattr(args, flag)))
        faces[name] = img[..., :3]
        linear_in = linear
    out = _out_path(args, args.out)
    pano = stitch_cubemap(faces, args.width)
    if is_linear_path(out) and not linear_in:
        log.warning("writing sRGB-valued face data to a linear container")
    _save(out, pano)
    print(out)
    return 0


def cmd_fuse(args) -> int:
    seq = []
    for text in args.bracket:
        path, ev = _parse_bracket(text)
        seq.append(Bracket(_srgb(path), ev))
    seq.sort(key=lambda b: b.ev)
    params = FusionParams(args.threshold, args.halfwidth)
    fused = fuse_brackets(seq, params)
    out = _out_path(args, args.out)
    if out.suffix.lower() != ".exr":
        raise InvalidInputError("--out must be an .exr file")
    write_exr(out, fused.image)
    print(json.dumps({"out": str(out), "dynamic_range_stops": fused.dynamic_range_stops}))
    return 0


def cmd_oracle_brackets(args) -> int:
    hdr = read_linear(_need(args.hdr))[..., :3]
    written = []
    for ev in sorted(set(args.ev)):
        name = f"ev{ev:+g}".replace("+", "p").replace("-", "m")
        out = _out_path(args, f"{args.prefix}{name}.png")
        write_png(out, simulate_underexposure(hdr, ev))
        written.append(f"{out}:{ev:g}")
    print("\n".join(written))
    return 0


def cmd_render(args) -> int:
    from .scene import load_scene_meshes, parse_scene
    from .tracer.render import RenderSettings, compile_scene, render_insertion_set

    scene = parse_scene(args.scene)
    env = read_linear(_need(args.env) if args.env else scene.environment)[..., :3]
    cfg = scene.render
    seed = cfg.seed if args.seed is None else args.seed
    settings = RenderSettings(env, args.spp or cfg.samples_per_pixel, cfg.max_depth, seed, cfg.strategy)
    compiled = compile_scene(load_scene_meshes(scene))
    cams = [c for c in scene.cameras if args.camera in (None, c.name)]
    if not cams:
        raise InvalidInputError(f"no camera named {args.camera!r} in {args.scene}")
    for nc in cams:
        rs = render_insertion_set(compiled, nc.camera, settings, threads=args.threads)
        for key, img in (("R0", rs.r0), ("R1", rs.r1), ("O", rs.obj)):
            out = _out_path(args, f"{nc.name}/{key}.exr")
            write_exr(out, img)
            print(out)
    return 0


def cmd_composite(args) -> int:
    r0 = read_linear(_need(args.r0))
    r1 = read_linear(_need(args.r1))
    obj = read_linear(_need(args.object))
    bg = _srgb(args.background) if args.background else linear_to_srgb(r0[..., :3])
    params = ShapingParams(args.shadow_gamma, args.shadow_min, args.shadow_strength)
    shaped = shape_ratio(shadow_ratio(r0, r1, params), params)
    out = _out_path(args, args.out)
    if out.suffix.lower() != ".png":
        raise InvalidInputError("--out must be a .png file")
    write_png(out, composite(bg, obj, shaped))
    print(out)
    return 0


def _pairs(pred: Path, ref: Path) -> list[tuple[str, Path, Path]]:
    if pred.is_dir() != ref.is_dir():
        raise InvalidInputError("--pred and --ref must both be files or both be directories")
    if not pred.is_dir():
        return [(pred.name, _need(pred), _need(ref))]
    names = sorted(p.name for p in pred.iterdir() if p.is_file())
    pairs = [(n, pred / n, ref / n) for n in names if (ref / n).is_file()]
    if not pairs:
        raise InvalidInputError(f"no filenames shared by {pred} and {ref}")
    return pairs


def cmd_eval(args) -> int:
    report = {}
    for name, p, r in _pairs(Path(args.pred), Path(args.ref)):
        report[name] = evaluate(_srgb(p), _srgb(r), args.pos_score, args.neg_score).to_dict()
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        _out_path(args, args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_pipeline(args) -> int:
    from .pipeline import run_pipeline
    from .scene import parse_scene

    scene = parse_scene(args.scene)
    external = dict((ev, p) for p, ev in map(_parse_bracket, args.bracket or []))
    mode = "external" if external else "oracle"
    manifest = run_pipeline(scene, mode, args.out_dir, external_brackets=external,
                            threads=args.threads, seed=args.seed)
    print(Path(args.out_dir) / "manifest.json")
    log.info("stages: %s", ", ".join(manifest["stages"]))
    return 0


def cmd_demo(args) -> int:
    from .demo import write_demo_scene
    print(write_demo_scene(args.out_dir))
    return 0


def _globals(defaults: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags with suppressed defaults so either position works
    g = argparse.ArgumentParser(add_help=False)
    dflt = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    g.add_argument("--seed", type=int, default=dflt(None), help="override the render seed")
    g.add_argument("--threads", type=int, default=dflt(1))
    g.add_argument("--out-dir", default=dflt("."), help="base directory for outputs")
    g.add_argument("-v", "--verbose", action="store_true", default=dflt(False))
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _globals(False)
    ap = argparse.ArgumentParser(prog="envinsert", parents=[_globals(True)],
                                 description="HDR environment reconstruction and shadow-catching object insertion.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stitch", parents=[common], help="stitch six cubemap faces into an equirect panorama")
    for flag, _ in FACE_FLAGS:
        p.add_argument(f"--{flag}", required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--out", required=True, help=".png, .exr or .pfm")
    p.set_defaults(func=cmd_stitch)

    p = sub.add_parser("fuse", parents=[common], help="fuse an exposure bracket into an HDR EXR")
    p.add_argument("--bracket", action="append", required=True, metavar="PATH:EV")
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.9)
    p.add_argument("--halfwidth", type=float, default=0.05)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("oracle-brackets", parents=[common], help="synthesize brackets from a known HDR map")
    p.add_argument("--hdr", required=True)
    p.add_argument("--ev", type=float, action="append", required=True)
    p.add_argument("--prefix", default="")
    p.set_defaults(func=cmd_oracle_brackets)

    p = sub.add_parser("render", parents=[common], help="render R0/R1/O layers for the scene cameras")
    p.add_argument("--scene", required=True)
    p.add_argument("--env", help="environment override (e.g. a fused EXR)")
    p.add_argument("--camera", help="only this camera")
    p.add_argument("--spp", type=int, default=None)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("composite", parents=[common], help="shadow-ratio composite over a background")
    p.add_argument("--r0", required=True)
    p.add_argument("--r1", required=True)
    p.add_argument("--object", required=True)
    p.add_argument("--background", help="sRGB PNG; defaults to the tone-mapped R0")
    p.add_argument("--out", required=True)
    d = ShapingParams()
    p.add_argument("--shadow-gamma", type=float, default=d.gamma_s)
    p.add_argument("--shadow-min", type=float, default=d.s_min)
    p.add_argument("--shadow-strength", type=float, default=d.strength)
    p.set_defaults(func=cmd_composite)

    p = sub.add_parser("eval", parents=[common], help="PSNR / SSIM / VQA ratio report")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--pos-score", type=float)
    p.add_argument("--neg-score", type=float)
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", parents=[common], help="run every stage for a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--bracket", action="append", metavar="PATH:EV",
                   help="external bracket; any given switches to external mode")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("make-demo", parents=[common], help="write the demo scene into --out-dir")
    p.set_defaults(func=cmd_demo)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return InvalidInputError.exit_code
    try:
        return args.func(args)
    except EnvInsertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
