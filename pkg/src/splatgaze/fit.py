"""Derivative-free recovery of per-eye gaze and kappa from a target image."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .deform import Providers
from .geometry import pitchyaw_to_vector, vector_to_pitchyaw
from .losses import EyeMask, eye_hr_loss
from .raster import render, worker_count
from .rig import pose_all_eyes
from .scene import AvatarState, Camera, HeadScene

PARAMETERS = (
    "left_pitch", "left_yaw", "right_pitch", "right_yaw",
    "left_kappa_pitch", "left_kappa_yaw", "right_kappa_pitch", "right_kappa_yaw",
)


@dataclass(frozen=True, eq=False)
class FitProblem:
    scene: HeadScene
    camera: Camera
    target: np.ndarray
    mask: EyeMask
    free: tuple
    bounds: np.ndarray  # k x 2, radians
    initial: np.ndarray  # k, radians
    providers: Providers = field(default_factory=Providers)
    state: Optional[AvatarState] = None
    background: Optional[np.ndarray] = None

    def __post_init__(self):
        free = tuple(self.free)
        unknown = [p for p in free if p not in PARAMETERS]
        if unknown or len(set(free)) != len(free) or not free:
            raise ValueError(f"free parameters must be distinct names from {PARAMETERS}, got {free}")
        b = np.asarray(self.bounds, dtype=np.float64).reshape(len(free), 2)
        x0 = np.asarray(self.initial, dtype=np.float64).reshape(len(free))
        if not np.all(np.isfinite(b)) or np.any(b[:, 0] >= b[:, 1]):
            raise ValueError("bounds must be finite with lower < upper")
        if np.any(x0 < b[:, 0]) or np.any(x0 > b[:, 1]):
            raise ValueError("initial point lies outside the bounds")
        target = np.asarray(self.target, dtype=np.float64)
        if target.ndim == 2:
            target = target[:, :, None]
        if target.shape[:2] != (self.camera.height, self.camera.width):
            raise ValueError(f"target is {target.shape[1]}x{target.shape[0]}, camera is {self.camera.width}x{self.camera.height}")
        object.__setattr__(self, "free", free)
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "initial", x0)
        object.__setattr__(self, "target", target)
        if self.state is None:
            object.__setattr__(self, "state", AvatarState.neutral(self.scene.expression_dim, self.scene.pose_dim))

    def configure(self, params) -> tuple[HeadScene, AvatarState]:
        """Scene and state with the free parameters substituted."""
        values = dict(zip(self.free, np.asarray(params, dtype=np.float64)))
        scene, state = self.scene, self.state
        gaze = {}
        for side in ("left", "right"):
            p, y = vector_to_pitchyaw(state.gaze(side))
            if f"{side}_pitch" in values or f"{side}_yaw" in values:
                gaze[side] = pitchyaw_to_vector(values.get(f"{side}_pitch", p), values.get(f"{side}_yaw", y))
            kp, ky = f"{side}_kappa_pitch", f"{side}_kappa_yaw"
            if kp in values or ky in values:
                rig = scene.rig(side)
                kappa = np.array([values.get(kp, rig.kappa[0]), values.get(ky, rig.kappa[1])])
                scene = scene.replace(**{f"{side}_rig": rig.replace(kappa=kappa)})
        if gaze:
            state = state.with_gaze(gaze.get("left"), gaze.get("right"))
        return scene, state


@dataclass(frozen=True)
class FitConfig:
    max_iters: int = 200
    initial_step: float = np.radians(5.0)
    shrink: float = 0.5
    tolerance: float = np.radians(0.02)


@dataclass(frozen=True, eq=False)
class FitResult:
    free: tuple
    x: np.ndarray
    objective: float
    iterations: int
    accepted: int
    trace: list
    final_step: float

    @property
    def params(self) -> dict:
        return dict(zip(self.free, (float(v) for v in self.x)))

    def to_dict(self) -> dict:
        return {
            "parameters_rad": self.params,
            "parameters_deg": {k: float(np.degrees(v)) for k, v in self.params.items()},
            "objective": self.objective,
            "iterations": self.iterations,
            "accepted_moves": self.accepted,
            "final_step_deg": float(np.degrees(self.final_step)),
            "objective_trace": list(self.trace),
        }


def render_eyes(scene: HeadScene, state: AvatarState, camera: Camera, providers: Providers = Providers(),
                channels: Optional[int] = None, background=None) -> np.ndarray:
    """Eyes-only stream image, single threaded."""
    eyes = pose_all_eyes(scene, state, providers.eye_offset)
    n = eyes.channels if channels is None else channels
    bg = None if background is None else np.asarray(background)[:n]
    return render(eyes.with_channels(n), camera, bg, threads=1).data


def objective(problem: FitProblem, params) -> float:
    """Masked L1 between the eyes-only render at ``params`` and the target."""
    scene, state = problem.configure(params)
    img = render_eyes(scene, state, problem.camera, problem.providers, problem.target.shape[2], problem.background)
    return eye_hr_loss(img, problem.target, problem.mask)


def fit(problem: FitProblem, config: FitConfig = FitConfig(), threads: Optional[int] = None) -> FitResult:
    """Coordinate descent: probe +/- step per parameter, keep strict improvements,
    shrink the step after a sweep with none."""
    lo, hi = problem.bounds[:, 0], problem.bounds[:, 1]
    x = problem.initial.copy()
    f = objective(problem, x)
    trace = [f]
    step = float(config.initial_step)
    iters = accepted = 0
    workers = min(2, worker_count(threads))
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while iters < config.max_iters and step >= config.tolerance:
            iters += 1
            improved = False
            for i in range(x.size):
                probes = []
                for sign in (1.0, -1.0):
                    c = x.copy()
                    c[i] = np.clip(c[i] + sign * step, lo[i], hi[i])
                    probes.append(c)
                if pool is None:
                    vals = [objective(problem, c) for c in probes]
                else:
                    vals = list(pool.map(lambda c: objective(problem, c), probes))
                best = int(np.argmin(vals))
                if vals[best] < f:
                    x, f = probes[best], vals[best]
                    trace.append(f)
                    accepted += 1
                    improved = True
            if not improved:
                step *= config.shrink
    finally:
        if pool is not None:
            pool.shutdown()
    return FitResult(problem.free, x, f, iters, accepted, trace, step)
