"""Domain types, scene ingestion/serialization and validation."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import pitchyaw_to_vector

QUAT_TOL = 1e-6
RIG_DIR_TOL = 1e-9
GAZE_TOL = 1e-6
ROTATION_TOL = 1e-6

# ---------------------------------------------------------------------------
# errors


class SceneError(ValueError):
    """Raised when a scene, Gaussian file or manifest cannot be loaded."""


class PlyError(SceneError):
    pass


@dataclass(frozen=True)
class Violation:
    type: str
    field: str
    index: Optional[int]
    message: str

    def __str__(self) -> str:
        where = f"[{self.index}]" if self.index is not None else ""
        return f"{self.type}.{self.field}{where}: {self.message}"


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True, eq=False)
class GaussianSet:
    """A splat cloud. ``features`` holds optional per-point feature rows fed to
    color/attribute providers; it is never rendered."""

    positions: np.ndarray
    orientations: np.ndarray
    scales: np.ndarray
    opacities: np.ndarray
    colors: np.ndarray
    features: Optional[np.ndarray] = None

    @property
    def count(self) -> int:
        return int(self.positions.shape[0])

    @property
    def channels(self) -> int:
        return int(self.colors.shape[1])

    def __len__(self) -> int:
        return self.count

    @classmethod
    def empty(cls, channels: int = 3) -> "GaussianSet":
        return cls(
            positions=np.zeros((0, 3)),
            orientations=np.zeros((0, 4)),
            scales=np.zeros((0, 3)),
            opacities=np.zeros(0),
            colors=np.zeros((0, channels)),
        )

    def replace(self, **changes) -> "GaussianSet":
        return dataclasses.replace(self, **changes)

    def take(self, index) -> "GaussianSet":
        return GaussianSet(
            positions=self.positions[index],
            orientations=self.orientations[index],
            scales=self.scales[index],
            opacities=self.opacities[index],
            colors=self.colors[index],
            features=None if self.features is None else self.features[index],
        )

    def with_channels(self, n: int) -> "GaussianSet":
        """Keep only the first ``n`` color channels."""
        if n > self.channels:
            raise ValueError(f"requested {n} channels but the set has {self.channels}")
        return self.replace(colors=self.colors[:, :n])

    @staticmethod
    def concat(sets) -> "GaussianSet":
        sets = list(sets)
        feats = None
        if sets and all(s.features is not None for s in sets):
            feats = np.concatenate([s.features for s in sets])
        return GaussianSet(
            positions=np.concatenate([s.positions for s in sets]),
            orientations=np.concatenate([s.orientations for s in sets]),
            scales=np.concatenate([s.scales for s in sets]),
            opacities=np.concatenate([s.opacities for s in sets]),
            colors=np.concatenate([s.colors for s in sets]),
            features=feats,
        )

    def equals(self, other: "GaussianSet") -> bool:
        """Bitwise equality of every field."""
        pairs = [
            (self.positions, other.positions),
            (self.orientations, other.orientations),
            (self.scales, other.scales),
            (self.opacities, other.opacities),
            (self.colors, other.colors),
        ]
        if (self.features is None) != (other.features is None):
            return False
        if self.features is not None:
            pairs.append((self.features, other.features))
        return all(a.shape == b.shape and a.tobytes() == b.tobytes() for a, b in pairs)


@dataclass(frozen=True)
class EyeballRig:
    side: str
    center: np.ndarray
    rest_direction: np.ndarray
    kappa: np.ndarray
    gaussian_range: tuple[int, int]

    @property
    def indices(self) -> slice:
        return slice(*self.gaussian_range)

    def replace(self, **changes) -> "EyeballRig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class LandmarkSet:
    points: np.ndarray
    kind: str = "facial"

    def __len__(self) -> int:
        return int(self.points.shape[0])


@dataclass(frozen=True)
class InfluenceParams:
    t1: float = 0.15
    t2: float = 0.25
    t3: float = 0.075
    t4: float = 0.125

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "InfluenceParams":
        d = d or {}
        t1 = float(d.get("t1", 0.15))
        t2 = float(d.get("t2", 0.25))
        # gaze thresholds default to half the expression thresholds
        t3 = float(d.get("t3", t1 * 0.5))
        t4 = float(d.get("t4", t2 * 0.5))
        return cls(t1, t2, t3, t4)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.t1, self.t2, self.t3, self.t4)


@dataclass(frozen=True, eq=False)
class HeadScene:
    facial: GaussianSet
    eyes: GaussianSet
    left_rig: EyeballRig
    right_rig: EyeballRig
    facial_landmarks: LandmarkSet
    left_eye_landmarks: LandmarkSet
    right_eye_landmarks: LandmarkSet
    influence: InfluenceParams = field(default_factory=InfluenceParams)
    channel_count: int = 3
    expression_dim: int = 0
    pose_dim: int = 0

    def rig(self, side: str) -> EyeballRig:
        return self.left_rig if side == "left" else self.right_rig

    def eye_landmarks(self, side: str) -> LandmarkSet:
        return self.left_eye_landmarks if side == "left" else self.right_eye_landmarks

    def replace(self, **changes) -> "HeadScene":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, eq=False)
class AvatarState:
    """Expression/pose conditioning plus per-eye gaze as unit vectors."""

    expression: np.ndarray
    pose: np.ndarray
    left_gaze: np.ndarray
    right_gaze: np.ndarray

    def __post_init__(self):
        for name in ("left_gaze", "right_gaze"):
            g = np.asarray(getattr(self, name), dtype=np.float64)
            if g.shape == (2,):
                g = pitchyaw_to_vector(*g)
            if g.shape != (3,) or abs(np.linalg.norm(g) - 1.0) > GAZE_TOL:
                raise ValueError(f"{name} must be a unit 3-vector or (pitch, yaw), got {g}")
            object.__setattr__(self, name, g)
        object.__setattr__(self, "expression", np.asarray(self.expression, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "pose", np.asarray(self.pose, dtype=np.float64).reshape(-1))

    @classmethod
    def neutral(cls, expression_dim: int = 0, pose_dim: int = 0, left=(0.0, 0.0), right=(0.0, 0.0)):
        return cls(np.zeros(expression_dim), np.zeros(pose_dim), np.asarray(left, float), np.asarray(right, float))

    def gaze(self, side: str) -> np.ndarray:
        return self.left_gaze if side == "left" else self.right_gaze

    def with_gaze(self, left=None, right=None) -> "AvatarState":
        return AvatarState(
            self.expression,
            self.pose,
            self.left_gaze if left is None else left,
            self.right_gaze if right is None else right,
        )

    def to_dict(self) -> dict:
        from .geometry import vector_to_pitchyaw

        out = {"expression": self.expression.tolist(), "pose": self.pose.tolist()}
        for side in ("left", "right"):
            g = self.gaze(side)
            p, y = vector_to_pitchyaw(g)
            out[f"{side}_gaze"] = {
                "vector": g.tolist(),
                "pitch_deg": float(np.degrees(p)),
                "yaw_deg": float(np.degrees(y)),
            }
        return out


@dataclass(frozen=True, eq=False)
class Camera:
    """Pinhole camera; camera axes are x-right, y-down, z-forward."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_camera: np.ndarray = field(default_factory=lambda: np.eye(4))

    @property
    def rotation(self) -> np.ndarray:
        return np.asarray(self.world_to_camera, dtype=np.float64)[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return np.asarray(self.world_to_camera, dtype=np.float64)[:3, 3]

    def resized(self, width: int, height: int) -> "Camera":
        """Same view at a different resolution; intrinsics scale proportionally."""
        sx = width / self.width
        sy = height / self.height
        return Camera(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, int(width), int(height), self.world_to_camera)

    def validate(self) -> list[Violation]:
        out = []
        if not (self.fx > 0 and self.fy > 0):
            out.append(Violation("Camera", "fx/fy", None, "focal lengths must be positive"))
        if self.width <= 0 or self.height <= 0:
            out.append(Violation("Camera", "width/height", None, "resolution must be positive"))
        m = np.asarray(self.world_to_camera, dtype=np.float64)
        if m.shape != (4, 4) or not np.all(np.isfinite(m)):
            out.append(Violation("Camera", "world_to_camera", None, "must be a finite 4x4 matrix"))
            return out
        r = m[:3, :3]
        if np.abs(r @ r.T - np.eye(3)).max() > ROTATION_TOL or abs(np.linalg.det(r) - 1.0) > ROTATION_TOL:
            out.append(Violation("Camera", "world_to_camera", None, "rotation block not orthonormal with det +1"))
        return out

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "world_to_camera": np.asarray(self.world_to_camera).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(
            float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
            int(d["width"]), int(d["height"]),
            np.asarray(d.get("world_to_camera", np.eye(4)), dtype=np.float64),
        )

    @classmethod
    def looking_at(cls, eye, target, up, fx, fy, width, height, cx=None, cy=None) -> "Camera":
        """Camera at ``eye`` looking at ``target``; ``up`` maps to image -y."""
        eye = np.asarray(eye, float)
        z = np.asarray(target, float) - eye
        z /= np.linalg.norm(z)
        up = np.asarray(up, float)
        y = -(up - np.dot(up, z) * z)
        y /= np.linalg.norm(y)
        x = np.cross(y, z)
        r = np.stack([x, y, z])
        m = np.eye(4)
        m[:3, :3] = r
        m[:3, 3] = -r @ eye
        return cls(fx, fy, width / 2 if cx is None else cx, height / 2 if cy is None else cy, width, height, m)


def load_camera(path) -> Camera:
    path = Path(path)
    if not path.exists():
        raise SceneError(f"camera file not found: {path}")
    try:
        cam = Camera.from_dict(json.loads(path.read_text()))
    except (KeyError, TypeError, json.JSONDecodeError) as e:
        raise SceneError(f"malformed camera file {path}: {e}") from e
    bad = cam.validate()
    if bad:
        raise SceneError(f"invalid camera {path}: " + "; ".join(map(str, bad)))
    return cam


def save_camera(camera: Camera, path) -> None:
    Path(path).write_text(json.dumps(camera.to_dict(), indent=2) + "\n")


# ---------------------------------------------------------------------------
# PLY

_PLY_TYPES = {
    "float": "<f4", "float32": "<f4",
    "double": "<f8", "float64": "<f8",
}
_OPACITY_EPS = 1e-7


def _logit(p):
    p = np.clip(p, _OPACITY_EPS, 1.0 - _OPACITY_EPS)
    return np.log(p) - np.log1p(-p)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def save_gaussians(gs: GaussianSet, path) -> None:
    """Write a binary little-endian PLY with log-scales and logit-opacities."""
    names = ["x", "y", "z", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    names += [f"ch_{i}" for i in range(gs.channels)]
    cols = [
        gs.positions,
        _logit(np.asarray(gs.opacities, float))[:, None],
        np.log(gs.scales),
        gs.orientations,
        gs.colors,
    ]
    if gs.features is not None:
        names += [f"f_{i}" for i in range(gs.features.shape[1])]
        cols.append(gs.features)
    data = np.concatenate([np.asarray(c, np.float64) for c in cols], axis=1).astype("<f4")
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {gs.count}"]
    header += [f"property float {n}" for n in names]
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(data.tobytes())


def _numbered(names, prefix) -> list[str]:
    found = sorted((int(n[len(prefix):]), n) for n in names if n.startswith(prefix) and n[len(prefix):].isdigit())
    idx = [i for i, _ in found]
    if idx != list(range(len(idx))):
        raise PlyError(f"properties {prefix}* are not numbered contiguously from 0: {[n for _, n in found]}")
    return [n for _, n in found]


def load_gaussians(path) -> GaussianSet:
    path = Path(path)
    if not path.exists():
        raise PlyError(f"Gaussian file not found: {path}")
    raw = path.read_bytes()
    end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or end < 0:
        raise PlyError(f"{path}: malformed header (missing 'ply' magic or end_header)")
    body_start = raw.index(b"\n", end) + 1
    lines = raw[:end].decode("ascii", errors="replace").splitlines()
    count = None
    props: list[tuple[str, str]] = []
    fmt_ok = False
    for ln in lines[1:]:
        tok = ln.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt_ok = tok[1:] == ["binary_little_endian", "1.0"]
        elif tok[0] == "element":
            if tok[1] != "vertex" or count is not None:
                raise PlyError(f"{path}: malformed header, unexpected element '{' '.join(tok[1:])}'")
            count = int(tok[2])
        elif tok[0] == "property":
            if len(tok) != 3 or tok[1] not in _PLY_TYPES:
                raise PlyError(f"{path}: malformed header, unsupported property line '{ln}'")
            props.append((tok[2], _PLY_TYPES[tok[1]]))
        else:
            raise PlyError(f"{path}: malformed header line '{ln}'")
    if not fmt_ok:
        raise PlyError(f"{path}: malformed header, only 'binary_little_endian 1.0' is supported")
    if count is None:
        raise PlyError(f"{path}: malformed header, no vertex element")

    names = [n for n, _ in props]
    required = ["x", "y", "z", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    missing = [n for n in required if n not in names]
    if missing:
        raise PlyError(f"{path}: wrong property names, missing {missing}")
    ch = _numbered(names, "ch_")
    ft = _numbered(names, "f_")
    unknown = sorted(set(names) - set(required) - set(ch) - set(ft))
    if unknown:
        raise PlyError(f"{path}: wrong property names, unexpected {unknown}")
    if not ch:
        raise PlyError(f"{path}: wrong property names, no ch_* color channels")

    dtype = np.dtype(props)
    expected = count * dtype.itemsize
    available = len(raw) - body_start
    if available != expected:
        full = available // dtype.itemsize
        raise PlyError(
            f"{path}: count mismatch, header declares {count} vertices but data holds {available} bytes "
            f"({full} complete); first incomplete element index {min(full, count)}"
        )
    rec = np.frombuffer(raw, dtype=dtype, count=count, offset=body_start)

    def cols(ns):
        return np.stack([rec[n].astype(np.float64) for n in ns], axis=1) if ns else np.zeros((count, 0))

    table = cols(names)
    bad = ~np.all(np.isfinite(table), axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise PlyError(f"{path}: non-finite value at element index {i}")

    quats = cols(["rot_0", "rot_1", "rot_2", "rot_3"])
    norms = np.linalg.norm(quats, axis=1)
    if count and (norms < 1e-12).any():
        raise PlyError(f"{path}: zero quaternion at element index {int(np.argmax(norms < 1e-12))}")
    return GaussianSet(
        positions=cols(["x", "y", "z"]),
        orientations=quats / norms[:, None] if count else quats,
        scales=np.exp(cols(["scale_0", "scale_1", "scale_2"])),
        opacities=_sigmoid(rec["opacity"].astype(np.float64)),
        colors=cols(ch),
        features=cols(ft) if ft else None,
    )


# ---------------------------------------------------------------------------
# landmarks / manifest


def load_landmarks(path, kind: str) -> LandmarkSet:
    path = Path(path)
    if not path.exists():
        raise SceneError(f"landmark file not found: {path}")
    if not path.read_text().strip():
        raise SceneError(f"{path}: landmark count 0")
    try:
        pts = np.loadtxt(path, ndmin=2, dtype=np.float64)
    except ValueError as e:
        raise SceneError(f"{path}: malformed landmark file: {e}") from e
    if pts.size == 0:
        raise SceneError(f"{path}: landmark count 0")
    if pts.shape[1] != 3:
        raise SceneError(f"{path}: landmarks need 3 coordinates per line, got {pts.shape[1]}")
    return LandmarkSet(pts, kind)


def save_landmarks(ls: LandmarkSet, path) -> None:
    np.savetxt(path, ls.points, fmt="%.9g")


def _rig_from_dict(side: str, d: dict) -> EyeballRig:
    rest = np.asarray(d.get("rest_direction", [0.0, 0.0, 1.0]), dtype=np.float64)
    rng = d["range"]
    return EyeballRig(
        side=side,
        center=np.asarray(d["center"], dtype=np.float64),
        rest_direction=rest,
        kappa=np.asarray(d.get("kappa", [0.0, 0.0]), dtype=np.float64),
        gaussian_range=(int(rng[0]), int(rng[1])),
    )


def rig_to_dict(rig: EyeballRig) -> dict:
    return {
        "center": rig.center.tolist(),
        "rest_direction": rig.rest_direction.tolist(),
        "kappa": rig.kappa.tolist(),
        "range": list(rig.gaussian_range),
    }


def read_manifest(manifest_path) -> dict:
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise SceneError(f"scene manifest not found: {manifest_path}")
    try:
        return json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise SceneError(f"{manifest_path}: malformed manifest JSON: {e}") from e


def load_scene(manifest_path) -> HeadScene:
    manifest_path = Path(manifest_path)
    m = read_manifest(manifest_path)
    base = manifest_path.parent
    try:
        facial = load_gaussians(base / m["facial_ply"])
        eyes = load_gaussians(base / m["eyes_ply"])
        left = _rig_from_dict("left", m["rigs"]["left"])
        right = _rig_from_dict("right", m["rigs"]["right"])
        facial_lm = load_landmarks(base / m["facial_landmarks"], "facial")
        eye_spec = m["eye_landmarks"]
    except KeyError as e:
        raise SceneError(f"{manifest_path}: manifest is missing key {e}") from e

    if isinstance(eye_spec, dict):
        left_lm = load_landmarks(base / eye_spec["left"], "eye")
        right_lm = load_landmarks(base / eye_spec["right"], "eye")
    else:
        both = load_landmarks(base / eye_spec, "eye").points
        # a single file is split by nearest rig center
        to_left = np.linalg.norm(both - left.center, axis=1) <= np.linalg.norm(both - right.center, axis=1)
        if to_left.all() or (~to_left).all():
            raise SceneError(f"{manifest_path}: eye landmarks cannot be split between the two rigs")
        left_lm, right_lm = LandmarkSet(both[to_left], "eye"), LandmarkSet(both[~to_left], "eye")

    lo = max(left.gaussian_range[0], right.gaussian_range[0])
    hi = min(left.gaussian_range[1], right.gaussian_range[1])
    if lo < hi:
        raise SceneError(f"{manifest_path}: overlapping rig ranges {left.gaussian_range} and {right.gaussian_range}")

    channels = int(m.get("channels", facial.channels))
    scene = HeadScene(
        facial=facial,
        eyes=eyes,
        left_rig=left,
        right_rig=right,
        facial_landmarks=facial_lm,
        left_eye_landmarks=left_lm,
        right_eye_landmarks=right_lm,
        influence=InfluenceParams.from_dict(m.get("influence")),
        channel_count=channels,
        expression_dim=int(m.get("expression_dim", 0)),
        pose_dim=int(m.get("pose_dim", 0)),
    )
    bad = validate(scene)
    if bad:
        raise SceneError(f"{manifest_path}: invalid scene: " + "; ".join(map(str, bad)))
    return scene


def save_scene(scene: HeadScene, directory, extra: Optional[dict] = None, name: str = "scene.json") -> Path:
    """Write plys, landmark files and a manifest into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_gaussians(scene.facial, d / "facial.ply")
    save_gaussians(scene.eyes, d / "eyes.ply")
    save_landmarks(scene.facial_landmarks, d / "facial_landmarks.txt")
    save_landmarks(scene.left_eye_landmarks, d / "left_eye_landmarks.txt")
    save_landmarks(scene.right_eye_landmarks, d / "right_eye_landmarks.txt")
    inf = scene.influence
    manifest = {
        "facial_ply": "facial.ply",
        "eyes_ply": "eyes.ply",
        "rigs": {"left": rig_to_dict(scene.left_rig), "right": rig_to_dict(scene.right_rig)},
        "facial_landmarks": "facial_landmarks.txt",
        "eye_landmarks": {"left": "left_eye_landmarks.txt", "right": "right_eye_landmarks.txt"},
        "influence": {"t1": inf.t1, "t2": inf.t2, "t3": inf.t3, "t4": inf.t4},
        "channels": scene.channel_count,
        "expression_dim": scene.expression_dim,
        "pose_dim": scene.pose_dim,
    }
    if extra:
        manifest.update(extra)
    out = d / name
    out.write_text(json.dumps(manifest, indent=2) + "\n")
    return out


# ---------------------------------------------------------------------------
# validation


def validate_gaussians(gs: GaussianSet, name: str = "GaussianSet") -> list[Violation]:
    out: list[Violation] = []
    n = gs.positions.shape[0] if gs.positions.ndim == 2 else -1
    shapes = {
        "positions": (gs.positions, 3),
        "orientations": (gs.orientations, 4),
        "scales": (gs.scales, 3),
        "colors": (gs.colors, None),
    }
    for fname, (arr, width) in shapes.items():
        if arr.ndim != 2 or arr.shape[0] != n or (width is not None and arr.shape[1] != width):
            out.append(Violation(name, fname, None, f"shape {arr.shape} inconsistent with count {n}"))
    if gs.opacities.shape != (n,):
        out.append(Violation(name, "opacities", None, f"shape {gs.opacities.shape} inconsistent with count {n}"))
    if gs.features is not None and (gs.features.ndim != 2 or gs.features.shape[0] != n):
        out.append(Violation(name, "features", None, f"shape {gs.features.shape} inconsistent with count {n}"))
    if out:
        return out

    for fname in ("positions", "orientations", "scales", "opacities", "colors"):
        arr = getattr(gs, fname)
        arr = arr if arr.ndim == 2 else arr[:, None]
        bad = np.flatnonzero(~np.all(np.isfinite(arr), axis=1))
        out += [Violation(name, fname, int(i), "non-finite value") for i in bad]
    qn = np.linalg.norm(gs.orientations, axis=1)
    for i in np.flatnonzero(~(np.abs(qn - 1.0) <= QUAT_TOL)):
        out.append(Violation(name, "orientations", int(i), f"quaternion norm {qn[i]:.6g} is not unit"))
    for i in np.flatnonzero(~np.all(gs.scales > 0, axis=1)):
        out.append(Violation(name, "scales", int(i), "scale must be strictly positive"))
    for i in np.flatnonzero(~((gs.opacities >= 0) & (gs.opacities <= 1))):
        out.append(Violation(name, "opacities", int(i), f"opacity out of range: {gs.opacities[i]:.6g}"))
    return out


def validate_state(state: AvatarState, scene: HeadScene) -> list[Violation]:
    out = []
    if state.expression.shape != (scene.expression_dim,):
        out.append(Violation("AvatarState", "expression", None, f"expected {scene.expression_dim} dims"))
    if state.pose.shape != (scene.pose_dim,):
        out.append(Violation("AvatarState", "pose", None, f"expected {scene.pose_dim} dims"))
    return out


def validate(scene: HeadScene) -> list[Violation]:
    """All invariant violations of ``scene``; empty iff the scene is valid."""
    out = validate_gaussians(scene.facial, "GaussianSet(facial)")
    out += validate_gaussians(scene.eyes, "GaussianSet(eyes)")

    for rig in (scene.left_rig, scene.right_rig):
        t = f"EyeballRig({rig.side})"
        if rig.side not in ("left", "right"):
            out.append(Violation(t, "side", None, f"unknown side {rig.side!r}"))
        if rig.center.shape != (3,) or not np.all(np.isfinite(rig.center)):
            out.append(Violation(t, "center", None, "must be a finite 3-vector"))
        rd = rig.rest_direction
        if rd.shape != (3,) or not abs(np.linalg.norm(rd) - 1.0) <= RIG_DIR_TOL:
            out.append(Violation(t, "rest_direction", None, "must be a unit 3-vector"))
        if rig.kappa.shape != (2,) or not np.all(np.isfinite(rig.kappa)):
            out.append(Violation(t, "kappa", None, "must be a finite (pitch, yaw) pair"))
        a, b = rig.gaussian_range
        if not (0 <= a <= b <= scene.eyes.count):
            out.append(Violation(t, "gaussian_range", None, f"range {rig.gaussian_range} outside 0..{scene.eyes.count}"))

    (la, lb), (ra, rb) = scene.left_rig.gaussian_range, scene.right_rig.gaussian_range
    if max(la, ra) < min(lb, rb):
        out.append(Violation("HeadScene", "rigs", max(la, ra), "overlapping rig ranges"))

    for fname in ("facial_landmarks", "left_eye_landmarks", "right_eye_landmarks"):
        ls: LandmarkSet = getattr(scene, fname)
        if ls.points.ndim != 2 or ls.points.shape[1] != 3 or len(ls) < 1:
            out.append(Violation("LandmarkSet", fname, None, "landmark count 0 or wrong shape"))
        else:
            for i in np.flatnonzero(~np.all(np.isfinite(ls.points), axis=1)):
                out.append(Violation("LandmarkSet", fname, int(i), "non-finite coordinate"))

    inf = scene.influence
    if not (0 < inf.t1 < inf.t2):
        out.append(Violation("InfluenceParams", "t1/t2", None, "need 0 < t1 < t2"))
    if not (0 < inf.t3 < inf.t4):
        out.append(Violation("InfluenceParams", "t3/t4", None, "need 0 < t3 < t4"))

    for fname, gs in (("facial", scene.facial), ("eyes", scene.eyes)):
        if gs.colors.ndim == 2 and gs.colors.shape[1] != scene.channel_count:
            out.append(Violation("HeadScene", f"{fname}.colors", None,
                                 f"{gs.colors.shape[1]} channels, scene declares {scene.channel_count}"))
    return out
