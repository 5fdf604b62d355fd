"""2D saliency backends applied to individual cube faces.

Two kinds exist: ``dog`` (a built-in multi-scale centre-surround baseline)
and ``precomputed`` (maps produced offline by any external 2D model, found on
disk through a filename template with ``{stem}``, ``{rot}`` and ``{face}``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .imaging import check_raster, gaussian_blur, read_raster, to_luminance

DEFAULT_DOG_SCALES = ((1.0, 4.0), (2.0, 8.0), (4.0, 16.0))
FINAL_BLUR_SIGMA = 4.0
KINDS = ("dog", "precomputed")


class BackendError(RuntimeError):
    pass


@dataclass(frozen=True)
class BackendDescriptor:
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BackendError(f"unknown backend kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "precomputed":
            for key in ("dir", "pattern"):
                if key not in self.params:
                    raise BackendError(f"precomputed backend requires parameter {key!r}")


def dog_backend(scales=DEFAULT_DOG_SCALES) -> BackendDescriptor:
    return BackendDescriptor("dog", {"scales": tuple(tuple(map(float, s)) for s in scales)})


def precomputed_backend(directory: str | os.PathLike, pattern: str) -> BackendDescriptor:
    directory = Path(directory)
    if not directory.is_dir():
        raise BackendError(f"precomputed map directory {directory} does not exist")
    return BackendDescriptor("precomputed", {"dir": str(directory), "pattern": pattern})


def dog_saliency(face: np.ndarray, scales=DEFAULT_DOG_SCALES) -> np.ndarray:
    """Sum of absolute centre-surround differences of luminance, then smoothed."""
    lum = to_luminance(check_raster(face, "face"))
    acc = np.zeros_like(lum)
    for sigma_c, sigma_s in scales:
        acc += np.abs(gaussian_blur(lum, sigma_c) - gaussian_blur(lum, sigma_s))
    return np.maximum(gaussian_blur(acc, FINAL_BLUR_SIGMA), 0.0)


def resolve_pattern(pattern: str, stem: str, rot: int, face: int) -> str:
    return pattern.format(stem=stem, rot=rot, face=face)


def predict_face(backend: BackendDescriptor, face: np.ndarray, *, stem: str | None = None,
                 rot: int | None = None, face_index: int | None = None) -> np.ndarray:
    """Single-channel, non-negative saliency for one square face.

    ``stem``, ``rot`` and ``face_index`` identify the face for the precomputed backend.
    """
    face = check_raster(face, "face")
    if face.shape[0] != face.shape[1]:
        raise BackendError(f"faces must be square, got {face.shape[:2]}")
    if face.ndim == 3 and face.shape[2] not in (1, 3):
        raise BackendError(f"faces must have 1 or 3 channels, got {face.shape[2]}")
    if backend.kind == "dog":
        return dog_saliency(face, backend.params.get("scales", DEFAULT_DOG_SCALES))
    if backend.kind == "precomputed":
        if stem is None or rot is None or face_index is None:
            raise BackendError("precomputed backend needs stem, rot and face_index")
        path = Path(backend.params["dir"]) / resolve_pattern(backend.params["pattern"], stem, rot, face_index)
        if not path.exists():
            raise BackendError(f"precomputed saliency map not found: {path}")
        smap = read_raster(path)
        if smap.ndim == 3:
            smap = smap.mean(axis=2)
        if smap.shape != face.shape[:2]:
            raise BackendError(f"{path}: map shape {smap.shape} does not match face shape {face.shape[:2]}")
        if np.any(smap < 0) or not np.all(np.isfinite(smap)):
            raise BackendError(f"{path}: saliency values must be finite and non-negative")
        return smap
    raise BackendError(f"unknown backend kind {backend.kind!r}")
