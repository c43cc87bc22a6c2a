"""Command-line interface.

Exit codes: 0 success, 1 input or validation error, 2 computation error.
Angles are degrees on the command line and radians everywhere else.
"""
from __future__ import annotations

import argparse
import json
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .deform import load_providers
from .fit import PARAMETERS, FitConfig, FitProblem, fit
from .images import read_image, write_png, write_splf
from .losses import EyeMask, metrics_report, synthesize_eye_mask
from .raster import render, render_streams, stream_sets, worker_count
from .scene import AvatarState, GaussianSet, SceneError, load_camera, load_scene


class InputError(Exception):
    """Bad arguments or unreadable inputs (exit code 1)."""


@dataclass
class RunConfig:
    command: str
    scene: Optional[Path] = None
    camera: Optional[Path] = None
    out: Optional[Path] = None
    width: Optional[int] = None
    height: Optional[int] = None
    background: Optional[list] = None
    left_gaze: tuple = (0.0, 0.0)
    right_gaze: tuple = (0.0, 0.0)
    grid: Optional[str] = None
    pairs: Optional[str] = None
    channels: Optional[int] = None
    seed: int = 0
    threshold: float = 0.5
    dilate: int = 0
    extra: dict = field(default_factory=dict)


def _floats(text: str, n: Optional[int], what: str) -> list:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"{what}: expected comma-separated numbers, got {text!r}")
    if n is not None and len(vals) != n:
        raise InputError(f"{what}: expected {n} values, got {len(vals)}")
    if not all(np.isfinite(vals)):
        raise InputError(f"{what}: values must be finite")
    return vals


def parse_grid(spec: str) -> list:
    """``p0:p1:n,y0:y1:n`` -> list of (pitch, yaw) in degrees, pitch-major."""
    try:
        axes = []
        for part in spec.split(","):
            a, b, n = part.split(":")
            n = int(n)
            if n < 1:
                raise ValueError
            axes.append(np.linspace(float(a), float(b), n) if n > 1 else np.array([float(a)]))
        pitches, yaws = axes
    except ValueError:
        raise InputError(f"--grid: expected p0:p1:n,y0:y1:n, got {spec!r}")
    return [(float(p), float(y)) for p in pitches for y in yaws]


def parse_pairs(spec: str) -> list:
    """``lp,ly,rp,ry;...`` -> list of per-eye gaze tuples in degrees."""
    cells = []
    for chunk in spec.split(";"):
        if chunk.strip():
            lp, ly, rp, ry = _floats(chunk, 4, "--pairs")
            cells.append(((lp, ly), (rp, ry)))
    if not cells:
        raise InputError("--pairs: no gaze pairs given")
    return cells


def cell_name(left, right) -> str:
    def fmt(v):
        return f"{v:+05.1f}"

    return f"L{fmt(left[0])}_{fmt(left[1])}_R{fmt(right[0])}_{fmt(right[1])}.png"


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class Session:
    """Scene, providers and camera resolved from a :class:`RunConfig`."""

    def __init__(self, cfg: RunConfig):
        if cfg.scene is None or cfg.camera is None:
            raise InputError("--scene and --camera are required")
        for p in (cfg.scene, cfg.camera):
            if not Path(p).exists():
                raise InputError(f"file not found: {p}")
        self.scene = load_scene(cfg.scene)
        self.providers = load_providers(cfg.scene)
        cam = load_camera(cfg.camera)
        if cfg.width or cfg.height:
            w = cfg.width or cam.width
            h = cfg.height or cam.height
            if w <= 0 or h <= 0:
                raise InputError("resolution must be positive")
            cam = cam.resized(w, h)
        self.camera = cam
        n = cfg.channels or self.scene.channel_count
        if not 1 <= n <= self.scene.channel_count:
            raise InputError(f"--channels must lie in 1..{self.scene.channel_count}")
        self.channels = n
        bg = cfg.background
        if bg is None:
            bg = [0.0] * n
        elif len(bg) == 1:
            bg = bg * n
        elif len(bg) < n:
            raise InputError(f"--background needs {n} values, got {len(bg)}")
        self.background = np.asarray(bg[:n], dtype=np.float64)

    def state(self, left, right) -> AvatarState:
        return AvatarState.neutral(
            self.scene.expression_dim, self.scene.pose_dim, np.radians(left), np.radians(right)
        )


def _write_image(path: Path, img) -> None:
    write_png(path, img.data)
    write_splf(path.with_suffix(".splf"), img.data)


def cmd_render(cfg: RunConfig) -> int:
    s = Session(cfg)
    out = Path(cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    state = s.state(cfg.left_gaze, cfg.right_gaze)
    try:
        streams = render_streams(s.scene, s.providers, state, s.camera, s.background, s.channels)
    except (ValueError, FloatingPointError) as e:
        raise RuntimeError(f"render failed: {e}") from e
    for name in ("combined", "facial", "eyes"):
        _write_image(out / f"{name}.png", getattr(streams, name))
    meta = {
        "state": state.to_dict(),
        "gaze_deg": {"left": list(cfg.left_gaze), "right": list(cfg.right_gaze)},
        "width": s.camera.width,
        "height": s.camera.height,
        "channels": s.channels,
        "background": s.background.tolist(),
        "images": ["combined.png", "facial.png", "eyes.png"],
    }
    (out / "render.json").write_text(_dump(meta))
    return 0


def cmd_redirect(cfg: RunConfig) -> int:
    if cfg.pairs:
        cells = parse_pairs(cfg.pairs)
    elif cfg.grid:
        cells = [(g, g) for g in parse_grid(cfg.grid)]
    else:
        raise InputError("redirect needs --grid or --pairs")
    s = Session(cfg)
    out = Path(cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)

    def run(cell):
        left, right = cell
        facial, eyes = stream_sets(s.scene, s.providers, s.state(left, right), s.channels)
        both = GaussianSet.concat([facial.replace(features=None), eyes.replace(features=None)])
        img = render(both, s.camera, s.background, threads=1)
        name = cell_name(left, right)
        write_png(out / name, img.data)
        return {
            "file": name,
            "left_pitch_deg": left[0], "left_yaw_deg": left[1],
            "right_pitch_deg": right[0], "right_yaw_deg": right[1],
        }

    workers = worker_count()
    try:
        if workers > 1 and len(cells) > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                entries = list(ex.map(run, cells))
        else:
            entries = [run(c) for c in cells]
    except (ValueError, FloatingPointError) as e:
        raise RuntimeError(f"render failed: {e}") from e
    (out / "index.json").write_text(_dump({"cells": entries}))
    return 0


def _load_image(path) -> np.ndarray:
    try:
        return read_image(path)
    except (FileNotFoundError, ValueError, OSError) as e:
        raise InputError(str(e))


def _crop(a: np.ndarray, crop) -> np.ndarray:
    if crop is None:
        return a
    x, y, w, h = (int(v) for v in crop)
    if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > a.shape[1] or y + h > a.shape[0]:
        raise InputError(f"--crop {crop} lies outside the {a.shape[1]}x{a.shape[0]} image")
    return a[y : y + h, x : x + w]


def cmd_metrics(cfg: RunConfig) -> int:
    ex = cfg.extra
    a = _crop(_load_image(ex["a"]), ex.get("crop"))
    b = _crop(_load_image(ex["b"]), ex.get("crop"))
    if a.shape != b.shape:
        raise InputError(f"image dimensions differ: {a.shape} vs {b.shape}")
    mask = None
    if ex.get("mask"):
        m = _crop(_load_image(ex["mask"]), ex.get("crop"))[:, :, 0]
        if m.shape != a.shape[:2]:
            raise InputError(f"mask is {m.shape[1]}x{m.shape[0]}, images are {a.shape[1]}x{a.shape[0]}")
        mask = EyeMask(m)
    ga = gb = None
    if ex.get("gaze_a") and ex.get("gaze_b"):
        from .geometry import pitchyaw_to_vector

        ga = pitchyaw_to_vector(*np.radians(ex["gaze_a"]))
        gb = pitchyaw_to_vector(*np.radians(ex["gaze_b"]))
    report = metrics_report(a, b, ex.get("max_value", 1.0), mask, ga, gb)
    text = _dump(report)
    if cfg.out:
        Path(cfg.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_fit(cfg: RunConfig) -> int:
    ex = cfg.extra
    s = Session(cfg)
    target = _load_image(ex["target"])
    if target.shape[:2] != (s.camera.height, s.camera.width):
        raise InputError(f"target is {target.shape[1]}x{target.shape[0]}, camera is {s.camera.width}x{s.camera.height}")
    n = min(target.shape[2], s.channels)
    target = target[:, :, :n]
    if ex.get("mask"):
        m = _load_image(ex["mask"])[:, :, 0]
        if m.shape != target.shape[:2]:
            raise InputError("mask and target dimensions differ")
        mask = EyeMask(m)
    else:
        mask = EyeMask.ones(s.camera.width, s.camera.height)
    free = tuple(p.strip() for p in ex["free"].split(",") if p.strip())
    bad = [p for p in free if p not in PARAMETERS]
    if bad:
        raise InputError(f"--free: unknown parameters {bad}; choose from {', '.join(PARAMETERS)}")
    start = {
        "left_pitch": cfg.left_gaze[0], "left_yaw": cfg.left_gaze[1],
        "right_pitch": cfg.right_gaze[0], "right_yaw": cfg.right_gaze[1],
    }
    for side in ("left", "right"):
        k = np.degrees(s.scene.rig(side).kappa)
        start[f"{side}_kappa_pitch"], start[f"{side}_kappa_yaw"] = float(k[0]), float(k[1])
    bound = ex["bound"]
    initial = np.radians([start[p] for p in free])
    bounds = np.radians([[start[p] - bound, start[p] + bound] for p in free])
    problem = FitProblem(
        s.scene, s.camera, target, mask, free, bounds, initial,
        providers=s.providers,
        state=s.state(cfg.left_gaze, cfg.right_gaze),
        background=s.background[:n],
    )
    config = FitConfig(
        max_iters=ex["max_iters"],
        initial_step=np.radians(ex["step"]),
        shrink=ex["shrink"],
        tolerance=np.radians(ex["tol"]),
    )
    result = fit(problem, config)
    text = _dump(result.to_dict())
    if cfg.out:
        out = Path(cfg.out)
        if out.suffix != ".json":
            out.mkdir(parents=True, exist_ok=True)
            out = out / "fit.json"
        out.write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_mask(cfg: RunConfig) -> int:
    s = Session(cfg)
    mask = synthesize_eye_mask(
        s.scene, s.providers, s.state(cfg.left_gaze, cfg.right_gaze), s.camera, cfg.threshold, cfg.dilate
    )
    out = Path(cfg.out or "mask.png")
    if out.suffix != ".png":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "mask.png"
    write_png(out, mask.weights)
    return 0


COMMANDS = {
    "render": cmd_render,
    "redirect": cmd_redirect,
    "metrics": cmd_metrics,
    "fit": cmd_fit,
    "mask": cmd_mask,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splatgaze", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def scene_args(p):
        p.add_argument("--scene", type=Path, required=True, help="scene manifest JSON")
        p.add_argument("--camera", type=Path, required=True, help="camera JSON")
        p.add_argument("--out", type=Path)
        p.add_argument("--width", type=int)
        p.add_argument("--height", type=int)
        p.add_argument("--background", help="r,g,b[,...] or one value for every channel")
        p.add_argument("--left-gaze", default="0,0", help="pitch,yaw in degrees")
        p.add_argument("--right-gaze", default="0,0", help="pitch,yaw in degrees")
        p.add_argument("--channels", type=int, help="render only the first N channels")
        p.add_argument("--seed", type=int, default=0)

    scene_args(sub.add_parser("render", help="render combined, facial-only and eyes-only images"))
    p = sub.add_parser("redirect", help="render a grid of per-eye gaze directions")
    scene_args(p)
    p.add_argument("--grid", help="p0:p1:n,y0:y1:n degrees, applied to both eyes")
    p.add_argument("--pairs", help="lp,ly,rp,ry;... explicit per-eye gaze list in degrees")

    p = sub.add_parser("metrics", help="PSNR/SSIM (and masked L1) between two images")
    p.add_argument("a", type=Path)
    p.add_argument("b", type=Path)
    p.add_argument("--mask", type=Path)
    p.add_argument("--crop", help="x,y,w,h")
    p.add_argument("--max-value", type=float, default=1.0)
    p.add_argument("--gaze-a", help="pitch,yaw degrees")
    p.add_argument("--gaze-b", help="pitch,yaw degrees")
    p.add_argument("--out", type=Path)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("fit", help="recover gaze/kappa from a target image")
    scene_args(p)
    p.add_argument("--target", type=Path, required=True)
    p.add_argument("--mask", type=Path)
    p.add_argument("--free", default="left_pitch,left_yaw,right_pitch,right_yaw")
    p.add_argument("--bound", type=float, default=30.0, help="search half-width around the start, degrees")
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--step", type=float, default=5.0, help="initial step, degrees")
    p.add_argument("--shrink", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=0.02, help="stop when the step falls below this, degrees")

    p = sub.add_parser("mask", help="synthesize the eye-region mask")
    scene_args(p)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--dilate", type=int, default=0)
    return parser


def config_from_args(args) -> RunConfig:
    cfg = RunConfig(command=args.command, out=getattr(args, "out", None), seed=args.seed)
    if args.command == "metrics":
        cfg.extra = {
            "a": args.a, "b": args.b, "mask": args.mask,
            "crop": _floats(args.crop, 4, "--crop") if args.crop else None,
            "max_value": args.max_value,
            "gaze_a": _floats(args.gaze_a, 2, "--gaze-a") if args.gaze_a else None,
            "gaze_b": _floats(args.gaze_b, 2, "--gaze-b") if args.gaze_b else None,
        }
        return cfg
    cfg.scene, cfg.camera = args.scene, args.camera
    cfg.width, cfg.height, cfg.channels = args.width, args.height, args.channels
    cfg.background = _floats(args.background, None, "--background") if args.background else None
    cfg.left_gaze = tuple(_floats(args.left_gaze, 2, "--left-gaze"))
    cfg.right_gaze = tuple(_floats(args.right_gaze, 2, "--right-gaze"))
    if args.command == "redirect":
        cfg.grid, cfg.pairs = args.grid, args.pairs
    elif args.command == "mask":
        cfg.threshold, cfg.dilate = args.threshold, args.dilate
        if not 0.0 < cfg.threshold < 1.0 or cfg.dilate < 0:
            raise InputError("--threshold must lie in (0, 1) and --dilate must be >= 0")
    elif args.command == "fit":
        cfg.extra = {
            "target": args.target, "mask": args.mask, "free": args.free, "bound": args.bound,
            "max_iters": args.max_iters, "step": args.step, "shrink": args.shrink, "tol": args.tol,
        }
    return cfg


VALUE_FLAGS = ("--left-gaze", "--right-gaze", "--grid", "--pairs", "--background", "--crop", "--gaze-a", "--gaze-b")
NUMERIC = re.compile(r"^-[\d.]")


def _join_signed_values(argv: list) -> list:
    """Let ``--left-gaze -5,10`` through: argparse would read ``-5,10`` as a flag."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in VALUE_FLAGS and i + 1 < len(argv) and NUMERIC.match(argv[i + 1]):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else [str(a) for a in argv]
    args = build_parser().parse_args(_join_signed_values(argv))
    try:
        cfg = config_from_args(args)
        return COMMANDS[cfg.command](cfg)
    except (InputError, SceneError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - any failure past input validation is a computation error
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
