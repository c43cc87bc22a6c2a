"""Render a gaze sweep of the head fixture into a single contact sheet.

Rows vary pitch, columns vary yaw; with --cross the right eye mirrors the
left eye's yaw so the sheet shows convergent and divergent gaze.
"""
import argparse
from pathlib import Path

import numpy as np

from splatgaze import synthetic
from splatgaze.images import write_png
from splatgaze.raster import GaussianSet, render, stream_sets
from splatgaze.scene import AvatarState

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pitch", type=float, nargs=3, default=(-15.0, 15.0, 3), metavar=("LO", "HI", "N"))
    ap.add_argument("--yaw", type=float, nargs=3, default=(-20.0, 20.0, 5), metavar=("LO", "HI", "N"))
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--cross", action="store_true")
    ap.add_argument("--out", type=Path, default=ROOT / "sweep.png")
    args = ap.parse_args()

    scene = synthetic.head_scene()
    providers = synthetic.head_providers()
    cam = synthetic.head_camera(args.size, args.size)
    pitches = np.linspace(args.pitch[0], args.pitch[1], int(args.pitch[2]))
    yaws = np.linspace(args.yaw[0], args.yaw[1], int(args.yaw[2]))
    sheet = np.ones((len(pitches) * args.size, len(yaws) * args.size, 3))
    for i, p in enumerate(pitches):
        for j, y in enumerate(yaws):
            right = (p, -y) if args.cross else (p, y)
            state = AvatarState.neutral(scene.expression_dim, scene.pose_dim, np.radians((p, y)), np.radians(right))
            facial, eyes = stream_sets(scene, providers, state)
            img = render(GaussianSet.concat([facial.replace(features=None), eyes.replace(features=None)]), cam)
            sheet[i * args.size:(i + 1) * args.size, j * args.size:(j + 1) * args.size] = img.data
    write_png(args.out, sheet)
    print(args.out)


if __name__ == "__main__":
    main()
