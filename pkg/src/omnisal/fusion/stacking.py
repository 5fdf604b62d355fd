"""Arranging per-rotation face maps channel-wise, plus the fixed fusion baselines."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..imaging import minmax_normalize
from ..projection import CubemapSet

N_ROTATIONS = 5


def condition_cmp(cmp: CubemapSet) -> np.ndarray:
    """Min-max normalise all six faces of one rotation with a single affine map."""
    return minmax_normalize(np.asarray(cmp.faces, dtype=np.float64))


def stack_corresponding_faces(cmps: Sequence[CubemapSet], face_index: int) -> np.ndarray:
    """``(l, l, 5)`` tensor; channel ``j`` holds face ``face_index`` of rotation ``j``."""
    return stack_all_faces(cmps)[face_index]


def stack_all_faces(cmps: Sequence[CubemapSet]) -> np.ndarray:
    """All six fusion tensors at once, shape ``(6, l, l, 5)``."""
    if len(cmps) != N_ROTATIONS:
        raise ValueError(f"expected {N_ROTATIONS} cubemaps, got {len(cmps)}")
    sizes = {c.size for c in cmps}
    if len(sizes) != 1:
        raise ValueError(f"cubemaps disagree on face size: {sorted(sizes)}")
    for c in cmps:
        if c.faces.ndim != 3:
            raise ValueError("fusion stacks single-channel saliency cubemaps")
    return np.stack([condition_cmp(c) for c in cmps], axis=-1)


def _check_maps(maps) -> np.ndarray:
    maps = [np.asarray(m, dtype=np.float64) for m in maps]
    if len(maps) == 0:
        raise ValueError("nothing to fuse")
    if len({m.shape for m in maps}) != 1:
        raise ValueError("maps to fuse must share one shape")
    return np.stack(maps)


def fuse_average(maps) -> np.ndarray:
    return _check_maps(maps).mean(axis=0)


def fuse_max(maps) -> np.ndarray:
    return _check_maps(maps).max(axis=0)
