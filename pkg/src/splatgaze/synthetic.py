"""Synthetic scenes: a stylised two-eye head, a textured eyeball close-up and
random cutoff-free splat clouds for renderer cross-checks.

Head units are roughly five times meters (eye centers 0.16 off the midline,
eyeball radius 0.06) so that the default influence thresholds separate
periocular, facial and far-field Gaussians.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .deform import DeformationProvider, Providers, TinyMlpWeights
from .geometry import quat_normalize, random_unit_quaternions
from .scene import (
    AvatarState,
    Camera,
    EyeballRig,
    GaussianSet,
    HeadScene,
    InfluenceParams,
    LandmarkSet,
    save_camera,
    save_scene,
)

EYE_RADIUS = 0.06
LEFT_EYE = np.array([0.16, 0.0, 0.0])
RIGHT_EYE = np.array([-0.16, 0.0, 0.0])
FACE_CENTER = np.array([0.0, -0.05, -0.22])
FACE_AXES = np.array([0.4, 0.52, 0.3])
EXPRESSION_DIM = 4
POSE_DIM = 3

SCLERA = np.array([0.93, 0.91, 0.88])
PUPIL = np.array([0.04, 0.03, 0.03])
SKIN = np.array([0.86, 0.68, 0.58])


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def fibonacci_cap(n: int, max_angle: float) -> np.ndarray:
    """Points spread evenly over the cap within ``max_angle`` of +z."""
    i = np.arange(n) + 0.5
    z = 1.0 - (1.0 - np.cos(max_angle)) * i / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def quat_z_to(normals: np.ndarray) -> np.ndarray:
    """Quaternions rotating +z onto each normal (a flat splat lies tangent)."""
    z = np.array([0.0, 0.0, 1.0])
    w = 1.0 + normals @ z
    xyz = np.cross(z, normals)
    q = np.concatenate([w[:, None], xyz], axis=1)
    flip = w < 1e-9
    q[flip] = [0.0, 1.0, 0.0, 0.0]
    return quat_normalize(q)


def iris_color(local: np.ndarray, base=(0.36, 0.22, 0.1)) -> np.ndarray:
    """Radial iris texture on unit-sphere points with +z as the optical axis."""
    theta = np.arccos(np.clip(local[:, 2], -1.0, 1.0))
    phi = np.arctan2(local[:, 1], local[:, 0])
    base = np.asarray(base)
    stripes = 0.5 + 0.5 * np.cos(9.0 * phi)
    ring = np.clip((theta - 0.12) / 0.3, 0.0, 1.0)
    col = base[None, :] * (0.75 + 0.5 * stripes[:, None]) * (1.0 - 0.45 * ring[:, None])
    col = np.where((theta < 0.16)[:, None], PUPIL, col)
    limbus = (theta > 0.40)[:, None]
    return np.where(limbus, base * 0.35, col)


def make_eyeball(center, radius: float = EYE_RADIUS, n_sclera: int = 500, n_iris: int = 400,
                 iris_angle: float = 0.45, iris_base=(0.36, 0.22, 0.1), channels: int = 3) -> GaussianSet:
    """Textured eyeball of tangent splats facing +z at rest; iris region is denser."""
    sclera = fibonacci_sphere(n_sclera)
    sclera = sclera[np.arccos(np.clip(sclera[:, 2], -1, 1)) > iris_angle]
    iris = fibonacci_cap(n_iris, iris_angle)
    local = np.concatenate([iris, sclera])
    n = local.shape[0]
    sclera_spacing = radius * np.sqrt(4.0 * np.pi / n_sclera)
    iris_spacing = radius * np.sqrt(2.0 * np.pi * (1.0 - np.cos(iris_angle)) / n_iris)
    tangent = np.concatenate([np.full(len(iris), 0.7 * iris_spacing), np.full(len(sclera), 0.7 * sclera_spacing)])
    scales = np.stack([tangent, tangent, np.full(n, 0.08 * radius * 0.1)], axis=1)
    colors = np.concatenate([iris_color(iris, iris_base), np.tile(SCLERA, (len(sclera), 1))])
    # faint veins break the sclera's rotational symmetry
    veins = 0.06 * np.sin(23.0 * sclera[:, 0]) * np.cos(17.0 * sclera[:, 1])
    colors[len(iris):, 1:] -= np.abs(veins)[:, None]
    if channels > 3:
        extra = np.tile(np.linspace(0.2, 0.8, channels - 3), (n, 1))
        colors = np.concatenate([colors, extra], axis=1)
    return GaussianSet(
        positions=np.asarray(center) + radius * local,
        orientations=quat_z_to(local),
        scales=scales,
        opacities=np.full(n, 0.92),
        colors=colors[:, :channels],
    )


def _face_points(n: int) -> np.ndarray:
    pts = fibonacci_sphere(4 * n)
    pts = pts[pts[:, 2] > -0.1]
    world = FACE_CENTER + FACE_AXES * pts
    hole = np.minimum(
        np.linalg.norm(world[:, :2] - LEFT_EYE[:2], axis=1),
        np.linalg.norm(world[:, :2] - RIGHT_EYE[:2], axis=1),
    )
    return world[hole > 0.068], pts[hole > 0.068]


def _face_colors(world: np.ndarray) -> np.ndarray:
    x, y = world[:, 0], world[:, 1]
    col = np.tile(SKIN, (len(world), 1)) * (0.9 + 0.15 * (y + 0.5))[:, None]
    lips = (np.abs(x) < 0.11) & (np.abs(y + 0.3) < 0.035)
    col[lips] = [0.7, 0.3, 0.3]
    brows = (np.abs(np.abs(x) - 0.16) < 0.07) & (np.abs(y - 0.11) < 0.018)
    col[brows] = [0.3, 0.2, 0.15]
    return np.clip(col, 0.0, 1.0)


def eye_ring(center, radius: float = 0.075, n: int = 8) -> np.ndarray:
    a = 2.0 * np.pi * np.arange(n) / n
    return np.asarray(center) + np.stack([radius * np.cos(a), 0.6 * radius * np.sin(a), np.full(n, 0.05)], axis=1)


def facial_landmarks() -> np.ndarray:
    return np.array([
        [0.10, 0.11, 0.06], [0.22, 0.11, 0.03], [-0.10, 0.11, 0.06], [-0.22, 0.11, 0.03],  # brows
        [0.0, 0.0, 0.08], [0.0, -0.12, 0.10], [0.05, -0.14, 0.08], [-0.05, -0.14, 0.08],  # nose
        [0.11, -0.30, 0.04], [-0.11, -0.30, 0.04], [0.0, -0.27, 0.06], [0.0, -0.33, 0.06],  # mouth
        [0.0, -0.52, 0.0], [0.28, -0.38, -0.05], [-0.28, -0.38, -0.05],  # jaw
    ])


def head_scene(n_face: int = 1500, n_sclera: int = 300, n_iris: int = 240, kappa_deg: float = 2.0,
               channels: int = 3) -> HeadScene:
    """Deterministic two-eye head with features ``[x, y, z, r, g, b]`` per facial Gaussian."""
    world, local = _face_points(n_face)
    normals = local / FACE_AXES
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    n = len(world)
    spacing = np.sqrt(4 * np.pi * np.prod(FACE_AXES) ** (2 / 3) / (4 * n_face))
    colors = _face_colors(world)
    if channels > 3:
        colors = np.concatenate([colors, np.tile(np.linspace(0.1, 0.9, channels - 3), (n, 1))], axis=1)
    facial = GaussianSet(
        positions=world,
        orientations=quat_z_to(normals),
        scales=np.stack([np.full(n, 0.8 * spacing), np.full(n, 0.8 * spacing), np.full(n, 0.1 * spacing)], axis=1),
        opacities=np.full(n, 0.95),
        colors=colors,
        features=np.concatenate([world, colors[:, :3]], axis=1),
    )
    left = make_eyeball(LEFT_EYE, n_sclera=n_sclera, n_iris=n_iris, iris_base=(0.3, 0.22, 0.12), channels=channels)
    right = make_eyeball(RIGHT_EYE, n_sclera=n_sclera, n_iris=n_iris, iris_base=(0.3, 0.22, 0.12), channels=channels)
    k = np.radians(kappa_deg)
    fwd = np.array([0.0, 0.0, 1.0])
    return HeadScene(
        facial=facial,
        eyes=GaussianSet.concat([left, right]),
        left_rig=EyeballRig("left", LEFT_EYE.copy(), fwd, np.array([0.0, -k]), (0, left.count)),
        right_rig=EyeballRig("right", RIGHT_EYE.copy(), fwd.copy(), np.array([0.0, k]), (left.count, left.count + right.count)),
        facial_landmarks=LandmarkSet(facial_landmarks(), "facial"),
        left_eye_landmarks=LandmarkSet(eye_ring(LEFT_EYE), "eye"),
        right_eye_landmarks=LandmarkSet(eye_ring(RIGHT_EYE), "eye"),
        influence=InfluenceParams.from_dict(None),
        channel_count=channels,
        expression_dim=EXPRESSION_DIM,
        pose_dim=POSE_DIM,
    )


def _selector_mlp(n_in: int, picks, cond_dim: int) -> TinyMlpWeights:
    w = np.zeros((len(picks), n_in + cond_dim))
    for row, col in enumerate(picks):
        w[row, col] = 1.0
    return TinyMlpWeights([(w, np.zeros(len(picks)))])


def head_providers(channels: int = 3) -> Providers:
    """Parametric stand-ins for the deformation networks of :func:`head_scene`.

    Gaze moves and shades the eyelid region, expression opens the mouth, and
    the base colors are carried through the expression/pose color providers.
    """
    rng = np.random.default_rng(7)

    def lid_motion(center):
        m = np.zeros((3, 3))
        m[1, 1] = 0.03  # lids follow vertical gaze
        m[0, 0] = 0.01
        return DeformationProvider.radial(center + [0, 0.02, 0.05], 0.06, m)

    def lid_shade(center):
        m = np.zeros((channels, 3))
        m[:3, 1] = -0.25
        return DeformationProvider.radial(center + [0, 0.05, 0.05], 0.05, m)

    mouth = np.zeros((3, EXPRESSION_DIM))
    mouth[1, 0] = -0.04
    mouth[0, 1] = 0.02
    pick = list(range(3, 6)) + [3] * (channels - 3)
    eye_offset = TinyMlpWeights([
        (rng.normal(scale=0.3, size=(8, EXPRESSION_DIM + POSE_DIM)), np.zeros(8)),
        (rng.normal(scale=0.01, size=(3, 8)), np.zeros(3)),
    ])
    return Providers(
        d_exp=DeformationProvider.radial([0.0, -0.3, 0.06], 0.08, mouth),
        d_pose=DeformationProvider.zero(3),
        d_left_gaze=lid_motion(LEFT_EYE),
        d_right_gaze=lid_motion(RIGHT_EYE),
        c_exp=DeformationProvider.mlp(_selector_mlp(6, pick, EXPRESSION_DIM), EXPRESSION_DIM),
        c_pose=DeformationProvider.mlp(_selector_mlp(6, pick, POSE_DIM), POSE_DIM),
        c_left_gaze=lid_shade(LEFT_EYE),
        c_right_gaze=lid_shade(RIGHT_EYE),
        eye_offset=DeformationProvider.mlp(eye_offset, EXPRESSION_DIM + POSE_DIM),
    )


def head_camera(width: int = 128, height: int = 128) -> Camera:
    f = 205.0 * width / 128.0
    return Camera.looking_at([0.0, -0.05, 1.6], [0.0, -0.05, 0.0], [0.0, 1.0, 0.0], f, f * height / width, width, height)


def eyeball_scene(n_sclera: int = 500, n_iris: int = 400, kappa_deg: float = 0.0) -> HeadScene:
    """Single textured eyeball on the left rig; the right rig is empty."""
    eye = make_eyeball(LEFT_EYE, n_sclera=n_sclera, n_iris=n_iris)
    k = np.radians(kappa_deg)
    fwd = np.array([0.0, 0.0, 1.0])
    return HeadScene(
        facial=GaussianSet.empty(3),
        eyes=eye,
        left_rig=EyeballRig("left", LEFT_EYE.copy(), fwd, np.array([0.0, k]), (0, eye.count)),
        right_rig=EyeballRig("right", RIGHT_EYE.copy(), fwd.copy(), np.zeros(2), (eye.count, eye.count)),
        facial_landmarks=LandmarkSet(facial_landmarks(), "facial"),
        left_eye_landmarks=LandmarkSet(eye_ring(LEFT_EYE), "eye"),
        right_eye_landmarks=LandmarkSet(eye_ring(RIGHT_EYE), "eye"),
        channel_count=3,
    )


def eyeball_camera(size: int = 64) -> Camera:
    f = 205.0 * size / 64.0
    target = LEFT_EYE
    return Camera.looking_at(target + [0.0, 0.0, 0.5], target, [0.0, 1.0, 0.0], f, f, size, size)


def neutral_state(scene: HeadScene, left=(0.0, 0.0), right=(0.0, 0.0)) -> AvatarState:
    return AvatarState.neutral(scene.expression_dim, scene.pose_dim, left, right)


def random_gaussians(rng: np.random.Generator, n: int, channels: int = 3) -> GaussianSet:
    return GaussianSet(
        positions=rng.uniform(-1.0, 1.0, size=(n, 3)),
        orientations=random_unit_quaternions(rng, n),
        scales=np.exp(rng.uniform(-4.0, 0.0, size=(n, 3))),
        opacities=rng.uniform(0.0, 1.0, size=n),
        colors=rng.uniform(0.0, 1.0, size=(n, channels)),
    )


def oracle_camera(size: int = 64) -> Camera:
    return Camera(64.0 * size / 64, 64.0 * size / 64, size / 2, size / 2, size, size, np.eye(4))


def cutoff_free_scene(rng: np.random.Generator, n: int, channels: int = 3, size: int = 64) -> GaussianSet:
    """Random Gaussians broad enough that no viewport pixel falls outside any
    3-sigma ellipse or below the 1/255 alpha floor."""
    z = rng.uniform(2.0, 4.0, size=n)
    uv = rng.uniform(0.25 * size, 0.75 * size, size=(n, 2))
    f = 64.0 * size / 64
    xy = (uv - size / 2) * z[:, None] / f
    scales = z[:, None] * rng.uniform(0.75, 1.3, size=(n, 3)) * size / 64
    return GaussianSet(
        positions=np.concatenate([xy, z[:, None]], axis=1),
        orientations=random_unit_quaternions(rng, n),
        scales=scales,
        opacities=rng.uniform(0.05, 1.0, size=n),
        colors=rng.uniform(0.0, 1.0, size=(n, channels)),
    )


def write_head_fixture(directory, width: int = 128, height: int = 128, channels: int = 3) -> Path:
    """Scene manifest (with providers), PLYs, landmarks and camera on disk."""
    d = Path(directory)
    scene = head_scene(channels=channels)
    manifest = save_scene(scene, d, extra={"providers": head_providers(channels).to_dict()})
    save_camera(head_camera(width, height), d / "camera.json")
    return manifest


def write_eyeball_fixture(directory, size: int = 64) -> Path:
    d = Path(directory)
    manifest = save_scene(eyeball_scene(), d)
    save_camera(eyeball_camera(size), d / "camera.json")
    return manifest
