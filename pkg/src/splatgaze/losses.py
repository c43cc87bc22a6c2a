"""Masked photometric losses and image/gaze evaluation metrics.

All L1 terms are means over pixels and channels, so values do not depend on
resolution. Masks multiply both operands and may hold fractional weights.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .raster import RenderTarget, downsample_array, render
from .scene import GaussianSet


@dataclass(frozen=True, eq=False)
class EyeMask:
    weights: np.ndarray  # H x W in [0, 1]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim == 3 and w.shape[2] == 1:
            w = w[:, :, 0]
        if w.ndim != 2:
            raise ValueError(f"mask must be H x W, got {w.shape}")
        if np.any(w < 0) or np.any(w > 1) or not np.all(np.isfinite(w)):
            raise ValueError("mask weights must lie in [0, 1]")
        object.__setattr__(self, "weights", w)

    @property
    def height(self) -> int:
        return int(self.weights.shape[0])

    @property
    def width(self) -> int:
        return int(self.weights.shape[1])

    @classmethod
    def ones(cls, width: int, height: int) -> "EyeMask":
        return cls(np.ones((height, width)))

    def downsample(self, factor: int) -> "EyeMask":
        return EyeMask(downsample_array(self.weights, factor))


@dataclass(frozen=True)
class LossWeights:
    lr: float = 0.5
    hr: float = 0.5
    blank: float = 1.0


@dataclass(frozen=True)
class LossReport:
    rgb_l1: float
    eye_lr: float
    eye_hr: float
    blank: float
    total: float
    weights: LossWeights
    blank_color: tuple = ()
    vgg: str = "unavailable"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["blank_color"] = list(self.blank_color)
        return d


def _pixels(img) -> np.ndarray:
    a = img.data if isinstance(img, RenderTarget) else np.asarray(img, dtype=np.float64)
    return a[:, :, None] if a.ndim == 2 else a


def _mask(mask, shape) -> np.ndarray:
    w = mask.weights if isinstance(mask, EyeMask) else np.asarray(mask, dtype=np.float64)
    if w.shape != tuple(shape[:2]):
        raise ValueError(f"mask is {w.shape[1]}x{w.shape[0]} but image is {shape[1]}x{shape[0]}")
    return w[:, :, None]


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")


def l1_image(a, b) -> float:
    a, b = _pixels(a), _pixels(b)
    _same_shape(a, b)
    return float(np.mean(np.abs(a - b)))


def masked_l1(a, b, mask) -> float:
    """mean |M*a - M*b| over pixels and channels."""
    a, b = _pixels(a), _pixels(b)
    _same_shape(a, b)
    m = _mask(mask, a.shape)
    return float(np.mean(np.abs(m * a - m * b)))


def eye_lr_loss(I_lr, I_gt, mask, factor: int) -> float:
    """Low-resolution eyeball loss against the area-downsampled ground truth."""
    gt = downsample_array(_pixels(I_gt), factor)
    return masked_l1(I_lr, gt, mask)


def eye_hr_loss(I_hr, I_gt, mask) -> float:
    return masked_l1(I_hr, I_gt, mask)


def blank_color(channels: int, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=channels)


def facial_blank_loss(I_facial, mask, c=None, seed: int = 0) -> float:
    """Pull facial-stream pixels inside the eye mask toward a flat color ``c``."""
    img = _pixels(I_facial)
    c = blank_color(img.shape[2], seed) if c is None else np.asarray(c, dtype=np.float64).reshape(-1)
    if c.shape != (img.shape[2],):
        raise ValueError(f"blank color has {c.size} channels, image has {img.shape[2]}")
    return masked_l1(img, np.broadcast_to(c, img.shape), mask)


def total_loss(streams, I_gt, mask, weights: LossWeights = LossWeights(), factor: int = 2,
               eyes_lr=None, c=None, seed: int = 0) -> LossReport:
    """Image L1 plus the weighted eyeball LR/HR and facial blank terms.

    ``streams`` carries full-resolution ``combined``, ``facial`` and ``eyes``
    renders. ``eyes_lr`` is the low-resolution eyes-only render; when omitted
    the full-resolution eyes render is area-downsampled by ``factor``.
    Streams are cut to the ground truth's channel count.
    """
    gt = _pixels(I_gt)
    n = gt.shape[2]
    combined = _pixels(streams.combined)[:, :, :n]
    eyes = _pixels(streams.eyes)[:, :, :n]
    facial = _pixels(streams.facial)[:, :, :n]
    lr = downsample_array(eyes, factor) if eyes_lr is None else _pixels(eyes_lr)[:, :, :n]
    m = mask if isinstance(mask, EyeMask) else EyeMask(mask)
    color = blank_color(n, seed) if c is None else np.asarray(c, dtype=np.float64)

    rgb = l1_image(combined, gt)
    e_lr = eye_lr_loss(lr, gt, m.downsample(factor), factor)
    e_hr = eye_hr_loss(eyes, gt, m)
    blank = facial_blank_loss(facial, m, color)
    return combine_losses(rgb, e_lr, e_hr, blank, weights, tuple(float(v) for v in color))


def combine_losses(rgb: float, eye_lr: float, eye_hr: float, blank: float,
                   weights: LossWeights = LossWeights(), color: tuple = ()) -> LossReport:
    total = rgb + weights.lr * eye_lr + weights.hr * eye_hr + weights.blank * blank
    return LossReport(rgb, eye_lr, eye_hr, blank, total, weights, color)


# ---------------------------------------------------------------------------
# metrics


def psnr(a, b, max_value: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    a, b = _pixels(a), _pixels(b)
    _same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(max_value**2 / mse))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def _filter_valid(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    rows = (sliding_window_view(img, k.size, axis=0) * k).sum(axis=-1)
    return (sliding_window_view(rows, k.size, axis=1) * k).sum(axis=-1)


def ssim(a, b, max_value: float = 1.0, window: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over valid 11x11 Gaussian windows, averaged over channels.

    Images smaller than the window use the largest odd window that fits.
    """
    a, b = _pixels(a), _pixels(b)
    _same_shape(a, b)
    size = min(window, a.shape[0], a.shape[1])
    size -= 1 - size % 2
    k = gaussian_window(size, sigma)
    c1 = (k1 * max_value) ** 2
    c2 = (k2 * max_value) ** 2
    scores = []
    for ch in range(a.shape[2]):
        x, y = a[:, :, ch], b[:, :, ch]
        mx, my = _filter_valid(x, k), _filter_valid(y, k)
        sxx = _filter_valid(x * x, k) - mx * mx
        syy = _filter_valid(y * y, k) - my * my
        sxy = _filter_valid(x * y, k) - mx * my
        num = (2.0 * mx * my + c1) * (2.0 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


def angular_error(a, b) -> float:
    """Angle between two unit gaze vectors in degrees."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    for name, v in (("a", a), ("b", b)):
        if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise ValueError(f"{name} must be a unit 3-vector, got {v}")
    return float(np.degrees(np.arccos(np.clip(np.dot(a, b), -1.0, 1.0))))


def disk(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return xx * xx + yy * yy <= r * r


def mask_from_alpha(alpha: np.ndarray, threshold: float = 0.5, dilation: int = 0) -> EyeMask:
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    m = np.asarray(alpha) > threshold
    if dilation > 0 and m.any():
        m = ndimage.binary_dilation(m, structure=disk(dilation))
    return EyeMask(m.astype(np.float64))


def synthesize_eye_mask(scene, providers, state, camera, threshold: float = 0.5, dilation: int = 0,
                        threads: Optional[int] = None) -> EyeMask:
    """Eye region mask: thresholded eyes-only alpha, dilated by a disk of ``dilation`` pixels."""
    from .rig import pose_all_eyes

    eyes: GaussianSet = pose_all_eyes(scene, state, providers.eye_offset)
    img = render(eyes.with_channels(1) if eyes.channels else eyes, camera, threads=threads)
    return mask_from_alpha(img.alpha, threshold, dilation)


def metrics_report(a, b, max_value: float = 1.0, mask=None, gaze_a=None, gaze_b=None) -> dict:
    """JSON-ready metrics; an infinite PSNR is serialized as the string "inf"."""
    p = psnr(a, b, max_value)
    out = {
        "psnr_db": "inf" if np.isinf(p) else p,
        "ssim": ssim(a, b, max_value),
        "gaze_error_deg": None if gaze_a is None or gaze_b is None else angular_error(gaze_a, gaze_b),
        "l1": l1_image(a, b),
    }
    if mask is not None:
        out["masked_l1"] = masked_l1(a, b, mask)
    return out
