"""Deterministic tile-based software splatting for N-channel images.

Pixel (u, v) is sampled at integer coordinates. Gaussians are depth sorted
once globally (ascending camera z, source index breaks ties) and every tile
composites its subset in that order. Compositing accumulates sequentially
along depth, so a Gaussian that is skipped at a pixel contributes exact zeros
and cannot perturb that pixel's bits.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import quat_to_matrix
from .scene import Camera, GaussianSet

TILE = 16
ALPHA_MAX = 0.99
ALPHA_MIN = 1.0 / 255.0
DILATION = 0.3
SIGMA_CUTOFF = 3.0
DET_MIN = 1e-12
DEFAULT_NEAR = 0.01


def worker_count(threads: Optional[int] = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("SPLATGAZE_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


@dataclass(frozen=True, eq=False)
class ProjectedGaussian:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    opacity: float
    color: np.ndarray
    source: int


@dataclass(frozen=True, eq=False)
class Projection:
    """All surviving Gaussians of one view, in compositing order."""

    source: np.ndarray
    mean2d: np.ndarray
    cov2d: np.ndarray
    conic: np.ndarray  # (a, b, c) of the inverse covariance
    depth: np.ndarray
    opacity: np.ndarray
    color: np.ndarray
    rect: np.ndarray  # inclusive pixel bounds x0, x1, y0, y1

    def __len__(self) -> int:
        return int(self.source.shape[0])


@dataclass(frozen=True, eq=False)
class RenderTarget:
    data: np.ndarray  # H x W x N
    alpha: np.ndarray  # H x W accumulated alpha
    transmittance: np.ndarray  # H x W remaining transmittance
    background: np.ndarray

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def channels(self) -> int:
        return int(self.data.shape[2])

    @classmethod
    def from_array(cls, data, alpha=None, background=None) -> "RenderTarget":
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        h, w, n = data.shape
        alpha = np.ones((h, w)) if alpha is None else np.asarray(alpha, dtype=np.float64)
        bg = np.zeros(n) if background is None else np.asarray(background, dtype=np.float64)
        return cls(data, alpha, 1.0 - alpha, bg)

    def with_channels(self, n: int) -> "RenderTarget":
        return RenderTarget(self.data[:, :, :n], self.alpha, self.transmittance, self.background[:n])


def covariance_3d(orientations: np.ndarray, scales: np.ndarray) -> np.ndarray:
    r = quat_to_matrix(orientations)
    rs = r * scales[:, None, :]
    return np.einsum("kij,klj->kil", rs, rs)


def project(gs: GaussianSet, camera: Camera, near: float = DEFAULT_NEAR) -> Projection:
    """Project every Gaussian, drop culled ones, and depth sort the rest."""
    n = gs.count
    rot = camera.rotation
    cam = np.einsum("ij,kj->ki", rot, gs.positions) + camera.translation if n else np.zeros((0, 3))
    x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
    keep = z > near
    idx = np.flatnonzero(keep)
    x, y, z = x[idx], y[idx], z[idx]

    sigma = covariance_3d(gs.orientations[idx], gs.scales[idx])
    k = idx.size
    jac = np.zeros((k, 2, 3))
    jac[:, 0, 0] = camera.fx / z
    jac[:, 0, 2] = -camera.fx * x / (z * z)
    jac[:, 1, 1] = camera.fy / z
    jac[:, 1, 2] = -camera.fy * y / (z * z)
    m = np.einsum("kij,jl->kil", jac, rot)
    cov = np.einsum("kij,kjl,kml->kim", m, sigma, m)
    cov[:, 0, 0] += DILATION
    cov[:, 1, 1] += DILATION
    cov[:, 0, 1] = cov[:, 1, 0] = 0.5 * (cov[:, 0, 1] + cov[:, 1, 0])

    a, b, c = cov[:, 0, 0], cov[:, 0, 1], cov[:, 1, 1]
    det = a * c - b * b
    mean = np.stack([camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy], axis=1)
    rx = SIGMA_CUTOFF * np.sqrt(np.maximum(a, 0.0))
    ry = SIGMA_CUTOFF * np.sqrt(np.maximum(c, 0.0))
    x0 = np.maximum(np.ceil(mean[:, 0] - rx), 0)
    x1 = np.minimum(np.floor(mean[:, 0] + rx), camera.width - 1)
    y0 = np.maximum(np.ceil(mean[:, 1] - ry), 0)
    y1 = np.minimum(np.floor(mean[:, 1] + ry), camera.height - 1)
    ok = (det >= DET_MIN) & (x0 <= x1) & (y0 <= y1) & np.all(np.isfinite(mean), axis=1)

    sel = np.flatnonzero(ok)
    order = sel[np.lexsort((idx[sel], z[sel]))]
    det = det[order]
    conic = np.stack([c[order] / det, -b[order] / det, a[order] / det], axis=1)
    src = idx[order]
    return Projection(
        source=src,
        mean2d=mean[order],
        cov2d=cov[order],
        conic=conic,
        depth=z[order],
        opacity=np.asarray(gs.opacities, dtype=np.float64)[src],
        color=np.asarray(gs.colors, dtype=np.float64)[src],
        rect=np.stack([x0[order], x1[order], y0[order], y1[order]], axis=1).astype(np.int64),
    )


def project_gaussian(index: int, gs: GaussianSet, camera: Camera, near: float = DEFAULT_NEAR):
    """Projection of one Gaussian, or ``None`` when it is culled."""
    p = project(gs.take(slice(index, index + 1)), camera, near)
    if len(p) == 0:
        return None
    return ProjectedGaussian(p.mean2d[0], p.cov2d[0], float(p.depth[0]), float(p.opacity[0]), p.color[0], int(index))


def _alphas(proj: Projection, sel, px, py, cutoffs: bool) -> np.ndarray:
    """Per-pixel alpha (P x K) of the selected Gaussians."""
    dx = px[:, None] - proj.mean2d[sel, 0][None, :]
    dy = py[:, None] - proj.mean2d[sel, 1][None, :]
    ca, cb, cc = proj.conic[sel, 0], proj.conic[sel, 1], proj.conic[sel, 2]
    q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
    alpha = np.minimum(ALPHA_MAX, proj.opacity[sel] * np.exp(-0.5 * q))
    if cutoffs:
        alpha = np.where((q <= SIGMA_CUTOFF**2) & (alpha >= ALPHA_MIN), alpha, 0.0)
    return alpha


def _composite(alpha: np.ndarray, colors: np.ndarray):
    """Front-to-back compositing of (P x K) alphas; returns color, alpha, transmittance."""
    p = alpha.shape[0]
    n = colors.shape[1]
    if alpha.shape[1] == 0:
        return np.zeros((p, n)), np.zeros(p), np.ones(p)
    trans = np.cumprod(1.0 - alpha, axis=1)
    before = np.concatenate([np.ones((p, 1)), trans[:, :-1]], axis=1)
    w = alpha * before
    # cumsum is a strictly sequential accumulation; exact zeros stay inert
    color = np.cumsum(w.T[:, :, None] * colors[:, None, :], axis=0)[-1]
    acc = np.minimum(np.cumsum(w, axis=1)[:, -1], 1.0)
    return color, acc, trans[:, -1]


def _background(background, n: int) -> np.ndarray:
    bg = np.zeros(n) if background is None else np.asarray(background, dtype=np.float64).reshape(-1)
    if bg.shape != (n,):
        raise ValueError(f"background has {bg.size} channels, image has {n}")
    return bg


def render(gs: GaussianSet, camera: Camera, background=None, near: float = DEFAULT_NEAR,
           threads: Optional[int] = None) -> RenderTarget:
    """Tile-based render with 3-sigma ellipse and 1/255 alpha cutoffs."""
    n = gs.channels
    bg = _background(background, n)
    h, w = camera.height, camera.width
    proj = project(gs, camera, near)
    data = np.empty((h, w, n))
    acc = np.empty((h, w))
    trans = np.empty((h, w))

    tiles = [(ty, tx) for ty in range(0, h, TILE) for tx in range(0, w, TILE)]
    rect = proj.rect

    def run(tile):
        ty, tx = tile
        y1, x1 = min(ty + TILE, h), min(tx + TILE, w)
        sel = np.flatnonzero((rect[:, 0] < x1) & (rect[:, 1] >= tx) & (rect[:, 2] < y1) & (rect[:, 3] >= ty))
        yy, xx = np.mgrid[ty:y1, tx:x1]
        px, py = xx.reshape(-1).astype(np.float64), yy.reshape(-1).astype(np.float64)
        alpha = _alphas(proj, sel, px, py, cutoffs=True)
        color, a, t = _composite(alpha, proj.color[sel])
        shape = (y1 - ty, x1 - tx)
        data[ty:y1, tx:x1] = (color + t[:, None] * bg).reshape(shape + (n,))
        acc[ty:y1, tx:x1] = a.reshape(shape)
        trans[ty:y1, tx:x1] = t.reshape(shape)

    workers = worker_count(threads)
    if workers == 1 or len(tiles) == 1:
        for t in tiles:
            run(t)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(run, tiles))
    return RenderTarget(data, acc, trans, bg)


def brute_force_render(gs: GaussianSet, camera: Camera, background=None, near: float = DEFAULT_NEAR) -> RenderTarget:
    """Reference renderer: every pixel against every projected Gaussian, no tiling or cutoffs."""
    n = gs.channels
    bg = _background(background, n)
    h, w = camera.height, camera.width
    proj = project(gs, camera, near)
    sel = np.arange(len(proj))
    data = np.empty((h * w, n))
    acc = np.empty(h * w)
    trans = np.empty(h * w)
    ys, xs = np.mgrid[0:h, 0:w]
    px, py = xs.reshape(-1).astype(np.float64), ys.reshape(-1).astype(np.float64)
    chunk = 1024
    for s in range(0, h * w, chunk):
        alpha = _alphas(proj, sel, px[s : s + chunk], py[s : s + chunk], cutoffs=False)
        color, a, t = _composite(alpha, proj.color)
        data[s : s + chunk] = color + t[:, None] * bg
        acc[s : s + chunk] = a
        trans[s : s + chunk] = t
    return RenderTarget(data.reshape(h, w, n), acc.reshape(h, w), trans.reshape(h, w), bg)


def footprint(gs: GaussianSet, camera: Camera, select, near: float = DEFAULT_NEAR) -> np.ndarray:
    """Boolean H x W map of pixels where any selected Gaussian passes the render cutoffs."""
    select = np.asarray(select)
    if select.dtype == bool:
        select = np.flatnonzero(select)
    proj = project(gs, camera, near)
    chosen = np.flatnonzero(np.isin(proj.source, select))
    out = np.zeros((camera.height, camera.width), dtype=bool)
    for k in chosen:
        x0, x1, y0, y1 = proj.rect[k]
        yy, xx = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
        alpha = _alphas(proj, np.array([k]), xx.reshape(-1).astype(float), yy.reshape(-1).astype(float), cutoffs=True)
        out[y0 : y1 + 1, x0 : x1 + 1] |= (alpha[:, 0] > 0).reshape(xx.shape)
    return out


def downsample(img: RenderTarget, factor: int) -> RenderTarget:
    """Area-average pooling of color, alpha and transmittance."""
    return RenderTarget(
        downsample_array(img.data, factor),
        downsample_array(img.alpha, factor),
        downsample_array(img.transmittance, factor),
        img.background,
    )


def downsample_array(a: np.ndarray, factor: int) -> np.ndarray:
    factor = int(factor)
    if factor < 1:
        raise ValueError("downsample factor must be a positive integer")
    h, w = a.shape[:2]
    if h % factor or w % factor:
        raise ValueError(f"factor {factor} does not divide image size {w}x{h}")
    if factor == 1:
        return a.copy()
    tail = a.shape[2:]
    blocks = a.reshape((h // factor, factor, w // factor, factor) + tail)
    return blocks.mean(axis=(1, 3))


@dataclass(frozen=True, eq=False)
class Streams:
    combined: RenderTarget
    facial: RenderTarget
    eyes: RenderTarget


def stream_sets(scene, providers, state, channels: Optional[int] = None):
    """Deformed facial set and posed eye set, cut to ``channels`` colors."""
    from .deform import apply_face_deformation
    from .rig import pose_all_eyes

    n = scene.channel_count if channels is None else channels
    facial = apply_face_deformation(scene, providers, state).with_channels(n)
    eyes = pose_all_eyes(scene, state, providers.eye_offset).with_channels(n)
    return facial, eyes


def render_streams(scene, providers, state, camera: Camera, background=None, channels: Optional[int] = None,
                   threads: Optional[int] = None) -> Streams:
    """Render combined, facial-only and eyes-only images of one avatar state."""
    facial, eyes = stream_sets(scene, providers, state, channels)
    both = GaussianSet.concat([facial.replace(features=None), eyes.replace(features=None)])
    return Streams(
        combined=render(both, camera, background, threads=threads),
        facial=render(facial, camera, background, threads=threads),
        eyes=render(eyes, camera, background, threads=threads),
    )
