"""End-to-end prediction: rotated cubemaps -> face saliency -> fusion -> ERP -> equator bias."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import fusion
from .backends import BackendDescriptor, dog_backend, predict_face
from .imaging import check_raster, minmax_normalize, read_smf, resize_bilinear, write_smf
from .metrics import MetricReport, report
from .projection import (DEFAULT_FACE_SIZE, CubemapSet, Rotation, check_rotation_set, cmp_to_erp,
                         default_rotation_set, erp_to_cmp)

FUSION_METHODS = ("cnn", "average", "max")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


# --- equator bias ----------------------------------------------------------------


@dataclass(frozen=True)
class EquatorBias:
    map: np.ndarray
    source_count: int


def compute_equator_bias(gt_maps: Sequence[np.ndarray]) -> EquatorBias:
    """Pixel-wise mean of the ground-truth ERP maps."""
    if len(gt_maps) == 0:
        raise ValueError("equator bias needs at least one ground-truth map")
    shapes = {np.shape(m) for m in gt_maps}
    if len(shapes) != 1:
        raise ValueError(f"ground-truth maps differ in shape: {sorted(shapes)}")
    acc = np.zeros(np.shape(gt_maps[0]), dtype=np.float64)
    for m in gt_maps:
        acc += np.asarray(m, dtype=np.float64)
    return EquatorBias(acc / len(gt_maps), len(gt_maps))


def apply_equator_bias(s_ini: np.ndarray, eb: EquatorBias) -> np.ndarray:
    """Pixel-wise product; the bias is resampled bilinearly when the grids differ."""
    s_ini = check_raster(s_ini, "saliency map")
    bias = check_raster(eb.map, "equator bias")
    if bias.shape != s_ini.shape:
        bias = resize_bilinear(bias, *s_ini.shape[:2], wrap_x=True)
    return np.asarray(s_ini, dtype=np.float64) * bias


def save_bias(eb: EquatorBias, path: str | os.PathLike) -> None:
    write_smf(path, eb.map)
    Path(f"{path}.json").write_text(json.dumps({"source_count": eb.source_count}) + "\n")


def load_bias(path: str | os.PathLike) -> EquatorBias:
    meta = Path(f"{path}.json")
    count = json.loads(meta.read_text())["source_count"] if meta.exists() else 0
    return EquatorBias(read_smf(path).astype(np.float64), int(count))


# --- prediction ------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    backend: BackendDescriptor = field(default_factory=dog_backend)
    rotations: tuple = tuple(default_rotation_set())
    face_size: int = DEFAULT_FACE_SIZE
    fusion: str = "average"
    weights: Optional[str] = None
    bias: Optional[str] = None
    normalize_output: bool = False

    def __post_init__(self):
        if self.fusion not in FUSION_METHODS:
            raise ValueError(f"unknown fusion method {self.fusion!r}; expected one of {FUSION_METHODS}")
        if self.fusion == "cnn" and not self.weights:
            raise ValueError("cnn fusion requires a weights file")
        if self.face_size <= 0:
            raise ValueError("face size must be positive")
        check_rotation_set(self.rotations)


def saliency_cubemaps(erp: np.ndarray, backend: BackendDescriptor, rotations: Sequence[Rotation],
                      size: int, stem: str = "image") -> list[CubemapSet]:
    """Project under every rotation and run the 2D backend on each of the 30 faces."""
    out = []
    for j, rot in enumerate(rotations):
        try:
            cmp = erp_to_cmp(erp, rot, size)
        except Exception as exc:
            raise PipelineError(f"projection (rotation {j})", exc) from exc
        faces = []
        for f in range(6):
            try:
                faces.append(predict_face(backend, cmp.faces[f], stem=stem, rot=j, face_index=f))
            except Exception as exc:
                raise PipelineError(f"2D saliency (image {stem}, rotation {j}, face {f})", exc) from exc
        out.append(CubemapSet(np.stack(faces).astype(np.float64), rot))
    return out


def fuse_tensors(tensors: np.ndarray, method: str, net: Optional[fusion.FusionNetwork] = None) -> np.ndarray:
    """Fuse ``(6, l, l, 5)`` stacks into six central-rotation faces ``(6, l, l)``."""
    if method == "average":
        return tensors.mean(axis=-1)
    if method == "max":
        return tensors.max(axis=-1)
    if method == "cnn":
        if net is None:
            raise ValueError("cnn fusion requires a network")
        return np.stack([fusion.predict(net, t).astype(np.float64) for t in tensors])
    raise ValueError(f"unknown fusion method {method!r}")


class Pipeline:
    """Loaded, immutable prediction pipeline (network and bias read once)."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.net = fusion.load(cfg.weights) if cfg.fusion == "cnn" else None
        self.bias = load_bias(cfg.bias) if cfg.bias else None

    def predict(self, erp: np.ndarray, stem: str = "image") -> np.ndarray:
        erp = check_raster(erp, "ERP image")
        height, width = erp.shape[:2]
        cfg = self.cfg
        cmps = saliency_cubemaps(erp, cfg.backend, cfg.rotations, cfg.face_size, stem)
        try:
            tensors = fusion.stack_all_faces(cmps)
        except Exception as exc:
            raise PipelineError("stacking", exc) from exc
        try:
            faces = fuse_tensors(tensors, cfg.fusion, self.net)
        except Exception as exc:
            raise PipelineError(f"fusion ({cfg.fusion})", exc) from exc
        try:
            s_ini = cmp_to_erp(CubemapSet(faces, Rotation(0.0, 0.0)), width, height)
        except Exception as exc:
            raise PipelineError("back-projection", exc) from exc
        s = np.maximum(s_ini, 0.0)
        if self.bias is not None:
            try:
                s = apply_equator_bias(s, self.bias)
            except Exception as exc:
                raise PipelineError("equator bias", exc) from exc
        if cfg.normalize_output:
            s = minmax_normalize(s)
        return s


def predict_erp(erp: np.ndarray, cfg: PipelineConfig = PipelineConfig(), stem: str = "image") -> np.ndarray:
    return Pipeline(cfg).predict(erp, stem)


# --- evaluation ------------------------------------------------------------------


def evaluate_dataset(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray],
                     lat_weighted: bool = False) -> tuple[MetricReport, list[MetricReport]]:
    """Per-image KLD/CC and their arithmetic means."""
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions but {len(gts)} ground-truth maps")
    if len(preds) == 0:
        raise ValueError("nothing to evaluate")
    per = []
    for i, (p, g) in enumerate(zip(preds, gts)):
        if np.shape(p) != np.shape(g):
            raise ValueError(f"image {i}: prediction shape {np.shape(p)} != ground truth {np.shape(g)}")
        per.append(report(g, p, lat_weighted=lat_weighted))
    mean = MetricReport(kld=float(np.mean([r.kld for r in per])), cc=float(np.mean([r.cc for r in per])))
    return mean, per
