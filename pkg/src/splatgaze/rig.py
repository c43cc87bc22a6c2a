"""Rigid eyeball posing: gaze rotation, kappa correction and center offset."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import IDENTITY_QUAT, quat_multiply, quat_normalize, quat_to_matrix
from .scene import AvatarState, EyeballRig, GaussianSet

ANTIPARALLEL_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class EyePose:
    rotation: np.ndarray
    center_offset: np.ndarray
    effective_center: np.ndarray

    @classmethod
    def identity(cls, rig: EyeballRig) -> "EyePose":
        return cls(IDENTITY_QUAT.copy(), np.zeros(3), rig.center + np.zeros(3))


def _check_unit(v, name):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > 1e-6:
        raise ValueError(f"{name} must be a unit 3-vector, got {v}")
    return v


def rotation_from_gaze(target, rest) -> np.ndarray:
    """Minimal-angle unit quaternion taking ``rest`` onto ``target``."""
    target = _check_unit(target, "target")
    rest = _check_unit(rest, "rest")
    if np.array_equal(target, rest):
        return IDENTITY_QUAT.copy()
    if np.dot(rest, target) < -1.0 + ANTIPARALLEL_EPS:
        # half turn about the first basis-derived axis orthogonal to rest
        for k in range(3):
            e = np.zeros(3)
            e[k] = 1.0
            axis = np.cross(rest, e)
            n = np.linalg.norm(axis)
            if n > 1e-6:
                return np.concatenate([[0.0], axis / n])
    # half-way vector form stays accurate for large angles
    half = rest + target
    half /= np.linalg.norm(half)
    q = np.concatenate([[np.dot(rest, half)], np.cross(rest, half)])
    return quat_normalize(q)


def kappa_matrix(kappa) -> np.ndarray:
    """Yaw about +y, then pitch about the yawed right axis."""
    pitch, yaw = (float(k) for k in kappa)
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    r_yaw = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    # rotation about +x by -pitch so positive pitch lifts +z toward +y
    r_pitch = np.array([[1.0, 0.0, 0.0], [0.0, cp, sp], [0.0, -sp, cp]])
    return r_yaw @ r_pitch


def apply_kappa(optical_gaze, kappa, inverse: bool = False) -> np.ndarray:
    """Rotate an optical-axis direction by the per-eye kappa offset.

    ``inverse=True`` undoes the offset (negated angles applied in reverse order).
    """
    d = np.asarray(optical_gaze, dtype=np.float64)
    kappa = np.asarray(kappa, dtype=np.float64)
    if not kappa.any():
        return d.copy()
    m = kappa_matrix(kappa)
    out = (m.T if inverse else m) @ d
    return out / np.linalg.norm(out)


def pose_eye(rig: EyeballRig, state: AvatarState, offset_provider=None) -> EyePose:
    """Rotation and center offset of one eyeball for the given avatar state.

    ``offset_provider`` maps the concatenated (expression, pose) vector to a
    3-vector displacement of the eyeball center; ``None`` means no offset.
    """
    if offset_provider is None:
        offset = np.zeros(3)
    else:
        from .deform import eval_provider

        cond = np.concatenate([state.expression, state.pose])
        offset = np.asarray(eval_provider(offset_provider, np.zeros(0), cond), dtype=np.float64).reshape(-1)
        if offset.shape != (3,):
            raise ValueError(f"eye offset provider returned {offset.shape[0]} values, expected 3")
    visual = apply_kappa(state.gaze(rig.side), rig.kappa)
    q = rotation_from_gaze(visual, rig.rest_direction)
    return EyePose(rotation=q, center_offset=offset, effective_center=rig.center + offset)


def transform_eye_gaussians(eyes: GaussianSet, rig: EyeballRig, pose: EyePose) -> GaussianSet:
    """Rotate the rig's Gaussians about its rest center, then translate by the offset."""
    a, b = rig.gaussian_range
    if not (0 <= a <= b <= eyes.count):
        raise ValueError(f"rig range {rig.gaussian_range} outside eye set of {eyes.count}")
    identity = np.array_equal(pose.rotation, IDENTITY_QUAT)
    if identity and not np.any(pose.center_offset):
        return eyes

    pos = eyes.positions.copy()
    quats = eyes.orientations
    if identity:
        pos[a:b] = pos[a:b] + pose.center_offset
    else:
        r = quat_to_matrix(pose.rotation)
        pos[a:b] = (pos[a:b] - rig.center) @ r.T + rig.center + pose.center_offset
        quats = quats.copy()
        quats[a:b] = quat_normalize(quat_multiply(pose.rotation, quats[a:b]))
    return eyes.replace(positions=pos, orientations=quats)


def pose_all_eyes(scene, state: AvatarState, offset_provider=None) -> GaussianSet:
    """Both rigs applied to the scene's eye Gaussians."""
    eyes = scene.eyes
    for rig in (scene.left_rig, scene.right_rig):
        eyes = transform_eye_gaussians(eyes, rig, pose_eye(rig, state, offset_provider))
    return eyes
