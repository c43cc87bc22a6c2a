"""Freeze CLI output checksums for the shipped head fixture.

Also stores a brute-force render of the same view so the test suite can check
that the frozen tiled output agrees with the oracle renderer.
"""
import hashlib
import json
import tempfile
from pathlib import Path

import numpy as np

from splatgaze.cli import main as cli
from splatgaze.deform import load_providers
from splatgaze.raster import GaussianSet, brute_force_render, stream_sets
from splatgaze.scene import AvatarState, load_camera, load_scene

ROOT = Path(__file__).resolve().parents[1]
HEAD = ROOT / "fixtures" / "head"
GOLDEN = ROOT / "tests" / "golden"

RENDER_ARGS = ["render", "--scene", str(HEAD / "scene.json"), "--camera", str(HEAD / "camera.json")]
MASK_ARGS = ["mask", "--scene", str(HEAD / "scene.json"), "--camera", str(HEAD / "camera.json"),
             "--threshold", "0.5", "--dilate", "2"]


def sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def main():
    GOLDEN.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        assert cli(RENDER_ARGS + ["--out", str(tmp / "r")]) == 0
        assert cli(MASK_ARGS + ["--out", str(tmp / "mask.png")]) == 0
        files = sorted(p.name for p in (tmp / "r").iterdir())
        render_sums = {f: sha(tmp / "r" / f) for f in files}
        mask_sum = sha(tmp / "mask.png")

    scene = load_scene(HEAD / "scene.json")
    facial, eyes = stream_sets(scene, load_providers(HEAD / "scene.json"), AvatarState.neutral(scene.expression_dim, scene.pose_dim))
    both = GaussianSet.concat([facial.replace(features=None), eyes.replace(features=None)])
    oracle = brute_force_render(both, load_camera(HEAD / "camera.json"))
    np.save(GOLDEN / "head_combined_oracle.npy", oracle.data.astype(np.float32))

    (GOLDEN / "head.json").write_text(
        json.dumps({"render": render_sums, "mask": mask_sum}, indent=2, sort_keys=True) + "\n"
    )
    print(json.dumps(render_sums, indent=2))


if __name__ == "__main__":
    main()
