"""Distance-weighted expression/pose/gaze deformation of facial Gaussians.

Every deformation term is ``lambda(x) * provider(input, conditioning)``.
Terms whose influence weight is exactly zero are never evaluated and add an
exact zero, so far-field Gaussians stay bitwise independent of the inputs that
drive those terms.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import quat_normalize
from .scene import AvatarState, GaussianSet, HeadScene, LandmarkSet, SceneError, read_manifest

MIN_SCALE = 1e-6
KINDS = ("zero", "constant", "radial-parametric", "tiny-mlp")


# ---------------------------------------------------------------------------
# providers


@dataclass(frozen=True, eq=False)
class TinyMlpWeights:
    """Affine layers with ReLU between them and an identity output."""

    layers: list

    def __post_init__(self):
        if not self.layers:
            raise ValueError("tiny MLP needs at least one layer")
        prev = None
        for i, (w, b) in enumerate(self.layers):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if prev is not None and w.shape[1] != prev:
                raise ValueError(f"layer {i}: expects {w.shape[1]} inputs but previous layer gives {prev}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite weights")
            prev = w.shape[0]
        object.__setattr__(self, "layers", [(np.asarray(w, float), np.asarray(b, float)) for w, b in self.layers])

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            h = h @ w.T + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    @classmethod
    def from_dict(cls, d: dict) -> "TinyMlpWeights":
        layers = []
        for i, layer in enumerate(d["layers"]):
            rows, cols = int(layer["rows"]), int(layer["cols"])
            w = np.asarray(layer["weights"], dtype=np.float64)
            if w.size != rows * cols:
                raise ValueError(f"layer {i}: {w.size} weights for a {rows}x{cols} matrix")
            layers.append((w.reshape(rows, cols), np.asarray(layer["bias"], dtype=np.float64)))
        return cls(layers)

    def to_dict(self) -> dict:
        return {
            "layers": [
                {"rows": w.shape[0], "cols": w.shape[1], "weights": w.reshape(-1).tolist(), "bias": b.tolist()}
                for w, b in self.layers
            ]
        }


def load_mlp(path) -> TinyMlpWeights:
    path = Path(path)
    if not path.exists():
        raise SceneError(f"MLP weights file not found: {path}")
    try:
        return TinyMlpWeights.from_dict(json.loads(path.read_text()))
    except (KeyError, ValueError, TypeError) as e:
        raise SceneError(f"{path}: invalid MLP weights: {e}") from e


@dataclass(frozen=True, eq=False)
class DeformationProvider:
    """A deformation network or a parametric stand-in for one.

    kind ``zero``      -> zeros of ``out_dim``
    kind ``constant``  -> ``params['value']``
    kind ``radial-parametric`` -> ``exp(-|x[:k]-center|^2 / 2r^2) * (matrix @ cond + bias)``
    kind ``tiny-mlp``  -> ``params['mlp'](concat(x, cond))``
    """

    kind: str
    out_dim: int
    params: dict = field(default_factory=dict)
    in_dim: Optional[int] = None
    cond_dim: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown provider kind {self.kind!r}")

    @classmethod
    def zero(cls, out_dim: int = 3) -> "DeformationProvider":
        return cls("zero", out_dim)

    @classmethod
    def constant(cls, value) -> "DeformationProvider":
        value = np.asarray(value, dtype=np.float64).reshape(-1)
        return cls("constant", value.size, {"value": value})

    @classmethod
    def radial(cls, center, radius: float, matrix, bias=None) -> "DeformationProvider":
        matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        bias = np.zeros(matrix.shape[0]) if bias is None else np.asarray(bias, dtype=np.float64)
        return cls(
            "radial-parametric",
            matrix.shape[0],
            {"center": np.asarray(center, dtype=np.float64), "radius": float(radius), "matrix": matrix, "bias": bias},
            cond_dim=matrix.shape[1],
        )

    @classmethod
    def mlp(cls, weights: TinyMlpWeights, cond_dim: int) -> "DeformationProvider":
        return cls("tiny-mlp", weights.out_dim, {"mlp": weights}, in_dim=weights.in_dim - cond_dim, cond_dim=cond_dim)

    @classmethod
    def from_spec(cls, spec: dict, base: Path = Path(".")) -> "DeformationProvider":
        kind = spec["kind"]
        if kind == "zero":
            return cls.zero(int(spec.get("out", 3)))
        if kind == "constant":
            return cls.constant(spec["value"])
        if kind == "radial-parametric":
            return cls.radial(spec["center"], spec["radius"], spec["matrix"], spec.get("bias"))
        if kind == "tiny-mlp":
            w = spec["weights"]
            weights = load_mlp(base / w) if isinstance(w, str) else TinyMlpWeights.from_dict(w)
            return cls.mlp(weights, int(spec["cond_dim"]))
        raise SceneError(f"unknown provider kind {kind!r}")

    def to_spec(self) -> dict:
        if self.kind == "zero":
            return {"kind": "zero", "out": self.out_dim}
        if self.kind == "constant":
            return {"kind": "constant", "value": self.params["value"].tolist()}
        if self.kind == "radial-parametric":
            p = self.params
            return {"kind": self.kind, "center": p["center"].tolist(), "radius": p["radius"],
                    "matrix": p["matrix"].tolist(), "bias": p["bias"].tolist()}
        return {"kind": self.kind, "cond_dim": self.cond_dim, "weights": self.params["mlp"].to_dict()}


def eval_provider(p: DeformationProvider, position, conditioning) -> np.ndarray:
    """Evaluate ``p`` on one input row (d,) or a batch (n, d) with a shared conditioning vector."""
    x = np.asarray(position, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x.reshape(1, x.size)
    cond = np.asarray(conditioning, dtype=np.float64).reshape(-1)
    n = x.shape[0]

    if p.in_dim is not None and x.shape[1] != p.in_dim:
        raise ValueError(f"{p.kind} provider expects {p.in_dim} input dims, got {x.shape[1]}")
    if p.cond_dim is not None and cond.size != p.cond_dim:
        raise ValueError(f"{p.kind} provider expects {p.cond_dim} conditioning dims, got {cond.size}")

    if p.kind == "zero":
        out = np.zeros((n, p.out_dim))
    elif p.kind == "constant":
        out = np.broadcast_to(p.params["value"], (n, p.out_dim)).copy()
    elif p.kind == "radial-parametric":
        c = p.params["center"]
        if x.shape[1] < c.size:
            raise ValueError(f"radial provider needs at least {c.size} input dims, got {x.shape[1]}")
        d2 = np.sum((x[:, : c.size] - c) ** 2, axis=1)
        amp = p.params["matrix"] @ cond + p.params["bias"]
        out = np.exp(-0.5 * d2 / p.params["radius"] ** 2)[:, None] * amp[None, :]
    else:
        mlp: TinyMlpWeights = p.params["mlp"]
        inp = np.concatenate([x, np.broadcast_to(cond, (n, cond.size))], axis=1)
        if inp.shape[1] != mlp.in_dim:
            raise ValueError(f"tiny-mlp expects {mlp.in_dim} inputs, got {inp.shape[1]}")
        out = mlp(inp)

    if out.shape[1] != p.out_dim:
        raise ValueError(f"{p.kind} provider produced {out.shape[1]} dims, declared {p.out_dim}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{p.kind} provider produced non-finite output")
    return out[0] if single else out


FAMILIES = ("exp", "pose", "left_gaze", "right_gaze")


@dataclass(frozen=True, eq=False)
class Providers:
    """Deformation providers by attribute family; ``None`` contributes nothing.

    When all four color providers are ``None`` the base colors pass through
    untouched; otherwise colors are the weighted provider sum alone.
    """

    d_exp: Optional[DeformationProvider] = None
    d_pose: Optional[DeformationProvider] = None
    d_left_gaze: Optional[DeformationProvider] = None
    d_right_gaze: Optional[DeformationProvider] = None
    c_exp: Optional[DeformationProvider] = None
    c_pose: Optional[DeformationProvider] = None
    c_left_gaze: Optional[DeformationProvider] = None
    c_right_gaze: Optional[DeformationProvider] = None
    a_exp: Optional[DeformationProvider] = None
    a_pose: Optional[DeformationProvider] = None
    a_left_gaze: Optional[DeformationProvider] = None
    a_right_gaze: Optional[DeformationProvider] = None
    eye_offset: Optional[DeformationProvider] = None

    def family(self, prefix: str) -> list:
        return [getattr(self, f"{prefix}_{f}") for f in FAMILIES]

    @classmethod
    def zeros(cls, channels: int = 3) -> "Providers":
        z3, zc, z8 = DeformationProvider.zero(3), DeformationProvider.zero(channels), DeformationProvider.zero(8)
        kw = {}
        for f in FAMILIES:
            kw[f"d_{f}"], kw[f"c_{f}"], kw[f"a_{f}"] = z3, zc, z8
        return cls(eye_offset=z3, **kw)

    @classmethod
    def from_dict(cls, d: Optional[dict], base: Path = Path(".")) -> "Providers":
        d = d or {}
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise SceneError(f"unknown provider slots: {sorted(unknown)}")
        return cls(**{k: DeformationProvider.from_spec(v, base) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name).to_spec() for f in fields(self) if getattr(self, f.name) is not None}


def load_providers(manifest_path) -> Providers:
    """Providers declared under the manifest's optional ``providers`` key."""
    manifest_path = Path(manifest_path)
    m = read_manifest(manifest_path)
    try:
        return Providers.from_dict(m.get("providers"), manifest_path.parent)
    except (KeyError, ValueError, TypeError) as e:
        raise SceneError(f"{manifest_path}: invalid providers block: {e}") from e


# ---------------------------------------------------------------------------
# influence factors


def min_landmark_distance(x, landmarks: LandmarkSet) -> np.ndarray:
    """Euclidean distance from each point to its nearest landmark."""
    pts = landmarks.points if isinstance(landmarks, LandmarkSet) else np.asarray(landmarks, dtype=np.float64)
    if pts.shape[0] == 0:
        raise ValueError("landmark set is empty")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = x.reshape(-1, 3)
    out = np.empty(x.shape[0])
    step = max(1, 1 << 20 // max(1, pts.shape[0]))
    for s in range(0, x.shape[0], step):
        diff = x[s : s + step, None, :] - pts[None, :, :]
        out[s : s + step] = np.sqrt(np.min(np.sum(diff * diff, axis=2), axis=1))
    return out[0] if single else out


def ramp(dist, near: float, far: float):
    """1 below ``near``, 0 above ``far``, linear in between."""
    dist = np.asarray(dist, dtype=np.float64)
    mid = 0.5 * (near + far)
    # centred form so the float midpoint maps to exactly 0.5
    lin = np.clip(0.5 + (mid - dist) / (far - near), 0.0, 1.0)
    out = np.where(dist < near, 1.0, np.where(dist > far, 0.0, lin))
    return out[()] if out.ndim == 0 else out


def lambda_exp(x, P0: LandmarkSet, t1: float, t2: float):
    return ramp(min_landmark_distance(x, P0), t1, t2)


def lambda_gaze(x, P_eye: LandmarkSet, t3: float, t4: float):
    return ramp(min_landmark_distance(x, P_eye), t3, t4)


@dataclass(frozen=True, eq=False)
class InfluenceWeights:
    exp: np.ndarray
    pose: np.ndarray
    left_gaze: np.ndarray
    right_gaze: np.ndarray

    def family(self) -> list:
        return [self.exp, self.pose, self.left_gaze, self.right_gaze]


def influence_weights(X0, scene: HeadScene) -> InfluenceWeights:
    inf = scene.influence
    lam_exp = lambda_exp(X0, scene.facial_landmarks, inf.t1, inf.t2)
    return InfluenceWeights(
        exp=lam_exp,
        pose=1.0 - lam_exp,
        left_gaze=lambda_gaze(X0, scene.left_eye_landmarks, inf.t3, inf.t4),
        right_gaze=lambda_gaze(X0, scene.right_eye_landmarks, inf.t3, inf.t4),
    )


def _conditionings(state: AvatarState) -> list:
    return [state.expression, state.pose, state.left_gaze, state.right_gaze]


def _weighted_sum(inputs, providers, weights: InfluenceWeights, state: AvatarState, out_dim: int, base=None):
    n = inputs.shape[0]
    acc = np.zeros((n, out_dim)) if base is None else np.array(base, dtype=np.float64, copy=True)
    for p, lam, cond in zip(providers, weights.family(), _conditionings(state)):
        if p is None:
            continue
        if p.out_dim != out_dim:
            raise ValueError(f"provider outputs {p.out_dim} dims, expected {out_dim}")
        rows = np.flatnonzero(lam > 0)
        if rows.size == 0:
            continue
        term = np.zeros((n, out_dim))
        term[rows] = lam[rows, None] * eval_provider(p, inputs[rows], cond)
        acc = acc + term
    return acc


def _weights(X0, scene_or_weights) -> InfluenceWeights:
    if isinstance(scene_or_weights, InfluenceWeights):
        return scene_or_weights
    return influence_weights(X0, scene_or_weights)


def deform_positions(X0, providers: Providers, state: AvatarState, scene) -> np.ndarray:
    """``X0`` plus the four influence-weighted displacement terms.

    ``scene`` supplies landmarks and thresholds; precomputed
    :class:`InfluenceWeights` are accepted in its place.
    """
    X0 = np.asarray(X0, dtype=np.float64)
    w = _weights(X0, scene)
    return _weighted_sum(X0, providers.family("d"), w, state, 3, base=X0)


def _feature_rows(gs: GaussianSet) -> np.ndarray:
    return gs.features if gs.features is not None else gs.positions


def blend_colors(F0, providers: Providers, state: AvatarState, weights: InfluenceWeights, channels: int) -> np.ndarray:
    """Influence-weighted sum of the color providers (no base color term)."""
    return _weighted_sum(np.asarray(F0, dtype=np.float64), providers.family("c"), weights, state, channels)


def blend_qsa(Q0, S0, A0, F0, providers: Providers, state: AvatarState, weights: InfluenceWeights):
    """Rotation/scale/opacity plus weighted 8-dim deltas, then renormalized and clamped."""
    base = np.concatenate([Q0, S0, np.asarray(A0)[:, None]], axis=1)
    out = _weighted_sum(np.asarray(F0, dtype=np.float64), providers.family("a"), weights, state, 8, base=base)
    q = quat_normalize(out[:, :4]) if len(out) else out[:, :4]
    s = np.maximum(out[:, 4:7], MIN_SCALE)
    a = np.clip(out[:, 7], 0.0, 1.0)
    return q, s, a


def apply_face_deformation(scene: HeadScene, providers: Providers, state: AvatarState) -> GaussianSet:
    """Facial Gaussians moved to the target expression, pose and gaze."""
    gs = scene.facial
    X0 = gs.positions
    w = influence_weights(X0, scene)
    F0 = _feature_rows(gs)
    positions = deform_positions(X0, providers, state, w)
    out = gs.replace(positions=positions)
    if any(p is not None for p in providers.family("c")):
        out = out.replace(colors=blend_colors(F0, providers, state, w, gs.channels))
    if any(p is not None for p in providers.family("a")):
        q, s, a = blend_qsa(gs.orientations, gs.scales, gs.opacities, F0, providers, state, w)
        out = out.replace(orientations=q, scales=s, opacities=a)
    return out
