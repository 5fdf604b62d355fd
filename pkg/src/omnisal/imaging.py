"""Raster primitives shared by every stage.

Rasters are numpy arrays of shape ``(H, W)`` or ``(H, W, C)``.  The continuous
coordinate of pixel index ``i`` is ``i + 0.5`` on both axes.
"""

from __future__ import annotations

import math
import os

import numpy as np
from PIL import Image
from scipy import ndimage

SMF_MAGIC = b"SMF1"


class NormalizationError(ValueError):
    """Raised when a map cannot be turned into a probability distribution."""


class RasterFormatError(ValueError):
    pass


def check_raster(img: np.ndarray, name: str = "raster") -> np.ndarray:
    img = np.asarray(img)
    if img.ndim not in (2, 3) or img.shape[0] == 0 or img.shape[1] == 0:
        raise ValueError(f"{name} must be a non-empty (H, W) or (H, W, C) array, got shape {img.shape}")
    if img.ndim == 3 and img.shape[2] < 1:
        raise ValueError(f"{name} has no channels")
    if not np.all(np.isfinite(img)):
        raise ValueError(f"{name} contains non-finite values")
    return img


def channels(img: np.ndarray) -> int:
    return 1 if img.ndim == 2 else img.shape[2]


def sample_bilinear(img: np.ndarray, x, y, wrap_x: bool = False) -> np.ndarray:
    """Vectorised bilinear lookup at continuous coordinates ``x`` (columns), ``y`` (rows).

    Out-of-range coordinates are clamped to the border pixel centres, except
    horizontally when ``wrap_x`` is set (used for the longitude seam of ERP images).
    Returns an array of shape ``x.shape`` (+ ``(C,)`` for multi-channel input).
    """
    h, w = img.shape[:2]
    x = np.asarray(x, dtype=np.float64) - 0.5
    y = np.asarray(y, dtype=np.float64) - 0.5
    y = np.clip(y, 0.0, h - 1)
    y0 = np.floor(y).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    fy = y - y0
    if wrap_x:
        x0f = np.floor(x)
        fx = x - x0f
        x0 = np.mod(x0f.astype(np.intp), w)
        x1 = np.mod(x0 + 1, w)
    else:
        x = np.clip(x, 0.0, w - 1)
        x0 = np.floor(x).astype(np.intp)
        x1 = np.minimum(x0 + 1, w - 1)
        fx = x - x0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def bilinear_sample(img: np.ndarray, x: float, y: float, ch: int = 0) -> float:
    """Bilinear value of channel ``ch`` at continuous pixel coordinate ``(x, y)``."""
    img = check_raster(img)
    if not (0 <= ch < channels(img)):
        raise IndexError(f"channel {ch} out of range for {channels(img)}-channel raster")
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("sample coordinates must be finite")
    plane = img if img.ndim == 2 else img[:, :, ch]
    return float(sample_bilinear(plane.astype(np.float64), x, y))


def gaussian_kernel(sigma: float) -> np.ndarray:
    if not (math.isfinite(sigma) and sigma > 0):
        raise ValueError(f"sigma must be positive and finite, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with radius ``ceil(3 sigma)`` and reflected borders."""
    k = gaussian_kernel(sigma)
    img = check_raster(img)
    out = np.asarray(img, dtype=np.float64)
    # scipy "reflect" is the half-sample symmetric extension (d c b a | a b c d)
    out = ndimage.correlate1d(out, k, axis=0, mode="reflect")
    out = ndimage.correlate1d(out, k, axis=1, mode="reflect")
    return out


def normalize_to_distribution(smap: np.ndarray) -> np.ndarray:
    smap = np.asarray(smap, dtype=np.float64)
    if not np.all(np.isfinite(smap)):
        raise NormalizationError("map contains non-finite values")
    if np.any(smap < 0):
        raise NormalizationError("map contains negative values")
    total = math.fsum(smap.ravel())
    if total <= 0:
        raise NormalizationError("map sums to zero and cannot be normalized")
    return smap / total


def minmax_normalize(smap: np.ndarray) -> np.ndarray:
    """Affine rescale to [0, 1]; a constant map becomes all zeros."""
    smap = np.asarray(smap, dtype=np.float64)
    if not np.all(np.isfinite(smap)):
        raise ValueError("map contains non-finite values")
    lo, hi = smap.min(), smap.max()
    if hi == lo:
        return np.zeros_like(smap)
    return np.clip((smap - lo) / (hi - lo), 0.0, 1.0)


def to_luminance(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return img if img.ndim == 2 else img.mean(axis=2)


# --- I/O -------------------------------------------------------------------


def read_png(path: str | os.PathLike) -> np.ndarray:
    """Read an 8-bit grayscale or RGB PNG into floats in [0, 1]."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK") else "L")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return arr


def write_png(path: str | os.PathLike, img: np.ndarray) -> None:
    img = check_raster(img)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim == 3 and img.shape[2] != 3:
        raise RasterFormatError("PNG output supports 1 or 3 channels")
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path, format="PNG")


def read_smf(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    newline = blob.find(b"\n")
    if newline < 0:
        raise RasterFormatError(f"{path}: missing SMF1 header line")
    parts = blob[:newline].split()
    if len(parts) != 3 or parts[0] != SMF_MAGIC:
        raise RasterFormatError(f"{path}: not an SMF1 file")
    try:
        width, height = int(parts[1]), int(parts[2])
    except ValueError as exc:
        raise RasterFormatError(f"{path}: malformed SMF1 dimensions") from exc
    if width <= 0 or height <= 0:
        raise RasterFormatError(f"{path}: invalid dimensions {width}x{height}")
    payload = blob[newline + 1:]
    if len(payload) != 4 * width * height:
        raise RasterFormatError(
            f"{path}: expected {4 * width * height} payload bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f4").reshape(height, width).astype(np.float32)


def write_smf(path: str | os.PathLike, smap: np.ndarray) -> None:
    smap = check_raster(smap)
    if smap.ndim == 3:
        if smap.shape[2] != 1:
            raise RasterFormatError("SMF1 stores single-channel maps only")
        smap = smap[:, :, 0]
    height, width = smap.shape
    with open(path, "wb") as fh:
        fh.write(f"SMF1 {width} {height}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(smap, dtype="<f4").tobytes())


def read_raster(path: str | os.PathLike) -> np.ndarray:
    """Dispatch on extension: ``.smf`` for SMF1, anything else is read as PNG."""
    if str(path).lower().endswith(".smf"):
        return read_smf(path)
    return read_png(path)


def write_raster(path: str | os.PathLike, img: np.ndarray) -> None:
    if str(path).lower().endswith(".smf"):
        write_smf(path, img)
    else:
        write_png(path, img)


def resize_bilinear(img: np.ndarray, height: int, width: int, wrap_x: bool = False) -> np.ndarray:
    """Resample onto a new grid by pixel-centre bilinear interpolation (``wrap_x`` for ERP maps)."""
    h, w = img.shape[:2]
    ys = (np.arange(height) + 0.5) * (h / height)
    xs = (np.arange(width) + 0.5) * (w / width)
    xx, yy = np.meshgrid(xs, ys)
    return sample_bilinear(np.asarray(img, dtype=np.float64), xx, yy, wrap_x=wrap_x)


__all__ = [
    "NormalizationError", "RasterFormatError", "bilinear_sample", "channels", "check_raster",
    "gaussian_blur", "gaussian_kernel", "minmax_normalize", "normalize_to_distribution",
    "read_png", "read_raster", "read_smf", "resize_bilinear", "sample_bilinear",
    "to_luminance", "write_png", "write_raster", "write_smf",
]
