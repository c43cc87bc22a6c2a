"""PNG and raw-float (``SPLF``) image files."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

SPLF_MAGIC = b"SPLF"


def to_uint8(data: np.ndarray) -> np.ndarray:
    return np.round(np.clip(np.asarray(data, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path, data: np.ndarray, alpha: np.ndarray | None = None) -> None:
    """8-bit PNG of the first three channels (grayscale for 1-channel data)."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 2:
        data = data[:, :, None]
    if data.shape[2] >= 3:
        rgb = to_uint8(data[:, :, :3])
        mode = "RGB"
    elif data.shape[2] == 1:
        rgb = to_uint8(data[:, :, 0])
        mode = "L"
    else:
        rgb = to_uint8(np.concatenate([data, np.zeros(data.shape[:2] + (1,))], axis=2))
        mode = "RGB"
    if alpha is not None:
        a = to_uint8(alpha)
        if mode == "L":
            rgb, mode = np.stack([rgb, a], axis=2), "LA"
        else:
            rgb, mode = np.concatenate([rgb, a[:, :, None]], axis=2), "RGBA"
    Image.fromarray(rgb, mode=mode).save(Path(path), format="PNG", optimize=False, compress_level=6)


def read_png(path) -> np.ndarray:
    """H x W x C float image in [0, 1]; any alpha channel is dropped."""
    with Image.open(path) as im:
        im.load()
        if im.mode in ("RGBA", "P"):
            im = im.convert("RGB")
        elif im.mode in ("LA", "I", "I;16"):
            im = im.convert("L")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return arr[:, :, None] if arr.ndim == 2 else arr


def write_splf(path, data: np.ndarray) -> None:
    """``SPLF`` magic, u32 width/height/channels, then row-major little-endian f32."""
    data = np.asarray(data)
    if data.ndim == 2:
        data = data[:, :, None]
    h, w, n = data.shape
    with open(path, "wb") as f:
        f.write(SPLF_MAGIC + struct.pack("<III", w, h, n))
        f.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def read_splf(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != SPLF_MAGIC or len(raw) < 16:
        raise ValueError(f"{path}: not an SPLF file")
    w, h, n = struct.unpack("<III", raw[4:16])
    body = raw[16:]
    if len(body) != 4 * w * h * n:
        raise ValueError(f"{path}: expected {4 * w * h * n} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w, n).astype(np.float64)


def read_image(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    with open(path, "rb") as f:
        head = f.read(4)
    return read_splf(path) if head == SPLF_MAGIC else read_png(path)
