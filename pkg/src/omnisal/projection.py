"""Equirectangular <-> cubemap conversion under yaw/pitch rotations.

Frame: X right, Y up, Z forward (right-handed).  Longitude ``theta`` grows
towards +X, latitude ``phi`` towards +Y.  Face order is
``[Front, Right, Back, Left, Top, Bottom]``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .imaging import check_raster, read_raster, sample_bilinear, write_raster

FACE_NAMES = ("front", "right", "back", "left", "top", "bottom")

# outward normal, right basis, up basis per face
FACE_NORMALS = np.array([[0, 0, 1], [1, 0, 0], [0, 0, -1], [-1, 0, 0], [0, 1, 0], [0, -1, 0]], dtype=np.float64)
FACE_RIGHT = np.array([[1, 0, 0], [0, 0, -1], [-1, 0, 0], [0, 0, 1], [1, 0, 0], [1, 0, 0]], dtype=np.float64)
FACE_UP = np.array([[0, 1, 0], [0, 1, 0], [0, 1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]], dtype=np.float64)

DEFAULT_FACE_SIZE = 512


class Rotation(NamedTuple):
    """Camera rotation in degrees; yaw turns +Z toward +X, pitch turns +Z toward +Y."""

    yaw: float
    pitch: float

    @classmethod
    def of(cls, yaw: float, pitch: float) -> "Rotation":
        if not (math.isfinite(yaw) and math.isfinite(pitch)):
            raise ValueError("rotation angles must be finite")
        if abs(pitch) > 90:
            raise ValueError(f"pitch must lie in [-90, 90], got {pitch}")
        yaw = (yaw + 180.0) % 360.0 - 180.0
        return cls(float(yaw), float(pitch))

    def matrix(self) -> np.ndarray:
        return rotation_matrix(self)


def default_rotation_set() -> list[Rotation]:
    """Central view plus the four diagonal (+-20, +-20) offsets, central first."""
    return [Rotation.of(*r) for r in ((0, 0), (20, 20), (-20, 20), (20, -20), (-20, -20))]


def parse_rotations(text: str) -> list[Rotation]:
    """Parse ``default`` or ``"y0:p0,y1:p1,..."`` (exactly five, first one (0, 0))."""
    if text.strip() == "default":
        return default_rotation_set()
    rots = []
    for item in text.split(","):
        yaw, _, pitch = item.partition(":")
        rots.append(Rotation.of(float(yaw), float(pitch)))
    check_rotation_set(rots)
    return rots


def check_rotation_set(rots: Sequence[Rotation]) -> None:
    if len(rots) != 5:
        raise ValueError(f"a rotation set holds exactly 5 rotations, got {len(rots)}")
    if tuple(rots[0]) != (0.0, 0.0):
        raise ValueError("the first rotation of a set must be the central (0, 0)")


def rotation_matrix(r: Rotation) -> np.ndarray:
    """``R_y(yaw) @ R_x(pitch)``."""
    a, b = math.radians(r.yaw), math.radians(r.pitch)
    ry = np.array([[math.cos(a), 0.0, math.sin(a)],
                   [0.0, 1.0, 0.0],
                   [-math.sin(a), 0.0, math.cos(a)]])
    rx = np.array([[1.0, 0.0, 0.0],
                   [0.0, math.cos(b), math.sin(b)],
                   [0.0, -math.sin(b), math.cos(b)]])
    return ry @ rx


def rotate(d, r: Rotation) -> np.ndarray:
    """Apply the rotation matrix to direction(s) ``d`` with shape ``(..., 3)``."""
    return np.asarray(d, dtype=np.float64) @ rotation_matrix(r).T


def erp_pixel_to_dir(u, v, width: int, height: int) -> np.ndarray:
    theta = 2.0 * np.pi * np.asarray(u, dtype=np.float64) / width - np.pi
    phi = np.pi / 2 - np.pi * np.clip(np.asarray(v, dtype=np.float64), 0.0, height) / height
    cp = np.cos(phi)
    return np.stack([cp * np.sin(theta), np.sin(phi), cp * np.cos(theta)], axis=-1)


def dir_to_erp_pixel(d, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray(d, dtype=np.float64)
    theta = np.arctan2(d[..., 0], d[..., 2])
    phi = np.arcsin(np.clip(d[..., 1] / np.linalg.norm(d, axis=-1), -1.0, 1.0))
    u = (theta + np.pi) / (2.0 * np.pi) * width
    v = (np.pi / 2 - phi) / np.pi * height
    return u, v


def dir_to_face(d) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gnomonic face lookup: returns ``(face_id, a, b)`` with ``a, b`` in [-1, 1].

    Ties go to the earliest face in the fixed face order.
    """
    d = np.asarray(d, dtype=np.float64)
    if np.any(np.all(d == 0, axis=-1)):
        raise ValueError("zero vector has no face")
    dots = d @ FACE_NORMALS.T
    face = np.argmax(dots, axis=-1)
    depth = np.take_along_axis(dots, face[..., None], axis=-1)[..., 0]
    a = np.einsum("...k,...k->...", d, FACE_RIGHT[face]) / depth
    b = np.einsum("...k,...k->...", d, FACE_UP[face]) / depth
    return face, a, b


def face_pixel_to_dir(face, s, t, size: int) -> np.ndarray:
    face = np.asarray(face)
    a = 2.0 * np.asarray(s, dtype=np.float64) / size - 1.0
    b = 1.0 - 2.0 * np.asarray(t, dtype=np.float64) / size
    v = FACE_NORMALS[face] + a[..., None] * FACE_RIGHT[face] + b[..., None] * FACE_UP[face]
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass(frozen=True)
class CubemapSet:
    """Six square faces, shape ``(6, l, l)`` or ``(6, l, l, C)``, projected under ``rotation``."""

    faces: np.ndarray
    rotation: Rotation = Rotation(0.0, 0.0)

    def __post_init__(self):
        f = self.faces
        if f.ndim not in (3, 4) or f.shape[0] != 6 or f.shape[1] != f.shape[2] or f.shape[1] == 0:
            raise ValueError(f"cubemap faces must have shape (6, l, l[, C]), got {f.shape}")

    @property
    def size(self) -> int:
        return self.faces.shape[1]


def _face_grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    c = np.arange(size, dtype=np.float64) + 0.5
    s, t = np.meshgrid(c, c)
    return s, t


def erp_to_cmp(erp: np.ndarray, rotation: Rotation = Rotation(0.0, 0.0),
               size: int = DEFAULT_FACE_SIZE) -> CubemapSet:
    erp = check_raster(erp, "ERP image")
    if size <= 0:
        raise ValueError("face size must be positive")
    height, width = erp.shape[:2]
    src = np.asarray(erp, dtype=np.float64)
    s, t = _face_grid(size)
    mat = rotation_matrix(rotation)
    faces = []
    for f in range(6):
        d = face_pixel_to_dir(np.full(s.shape, f), s, t, size) @ mat.T
        u, v = dir_to_erp_pixel(d, width, height)
        faces.append(sample_bilinear(src, u, v, wrap_x=True))
    return CubemapSet(np.stack(faces).astype(erp.dtype if erp.dtype.kind == "f" else np.float64), rotation)


def cmp_to_erp(cmp: CubemapSet, width: int, height: int) -> np.ndarray:
    if width <= 0 or height <= 0:
        raise ValueError("ERP dimensions must be positive")
    size = cmp.size
    faces = np.asarray(cmp.faces, dtype=np.float64)
    us = np.arange(width, dtype=np.float64) + 0.5
    vs = np.arange(height, dtype=np.float64) + 0.5
    uu, vv = np.meshgrid(us, vs)
    d = erp_pixel_to_dir(uu, vv, width, height) @ rotation_matrix(cmp.rotation)  # R^T d
    face, a, b = dir_to_face(d)
    s = (a + 1.0) * 0.5 * size
    t = (1.0 - b) * 0.5 * size
    out = np.empty((height, width) + faces.shape[3:], dtype=np.float64)
    for f in range(6):
        m = face == f
        if np.any(m):
            out[m] = sample_bilinear(faces[f], s[m], t[m])
    return out


# --- on-disk layout: <stem>_f{0..5}.<ext> plus <stem>.rot ---------------------


def save_cmp(cmp: CubemapSet, directory: str | os.PathLike, stem: str, ext: str = "png") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(6):
        p = directory / f"{stem}_f{i}.{ext}"
        write_raster(p, cmp.faces[i])
        paths.append(p)
    (directory / f"{stem}.rot").write_text(f"{cmp.rotation.yaw!r} {cmp.rotation.pitch!r}\n")
    return paths


def load_cmp(directory: str | os.PathLike, stem: str, ext: str | None = None) -> CubemapSet:
    directory = Path(directory)
    rot_path = directory / f"{stem}.rot"
    if not rot_path.exists():
        raise FileNotFoundError(f"missing rotation sidecar {rot_path}")
    yaw, pitch = (float(v) for v in rot_path.read_text().split())
    if ext is None:
        ext = "smf" if (directory / f"{stem}_f0.smf").exists() else "png"
    faces = []
    for i in range(6):
        p = directory / f"{stem}_f{i}.{ext}"
        if not p.exists():
            raise FileNotFoundError(f"missing cube face {p}")
        faces.append(read_raster(p))
    shapes = {f.shape for f in faces}
    if len(shapes) != 1:
        raise ValueError(f"cube faces under {directory}/{stem} differ in shape: {sorted(shapes)}")
    return CubemapSet(np.stack(faces), Rotation.of(yaw, pitch))
