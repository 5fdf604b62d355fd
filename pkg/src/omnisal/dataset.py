"""Manifest-driven ingestion of (ERP image, ERP ground truth) pairs."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends import BackendDescriptor
from .fusion import stack_all_faces
from .imaging import minmax_normalize, read_raster
from .pipeline import PipelineError, saliency_cubemaps
from .projection import Rotation, check_rotation_set, erp_to_cmp

SPLITS = ("train", "test")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Entry:
    image: Path
    gt: Path
    split: str

    @property
    def stem(self) -> str:
        return self.image.stem


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    entries: tuple[Entry, ...]

    def split(self, name: str) -> list[Entry]:
        return [e for e in self.entries if e.split == name]


def load_manifest(path: str | os.PathLike, check_files: bool = True) -> DatasetManifest:
    """Parse and validate ``{"root": ..., "entries": [{"image", "gt", "split"}]}``.

    ``root`` is resolved against the manifest's directory, entry paths against ``root``.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ManifestError(f"manifest {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "root" not in doc or not isinstance(doc.get("entries"), list):
        raise ManifestError(f"manifest {path} must be an object with 'root' and 'entries'")
    root = (path.parent / doc["root"]).resolve()
    entries = []
    seen = set()
    for i, raw in enumerate(doc["entries"]):
        try:
            image, gt, split = raw["image"], raw["gt"], raw["split"]
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"entry {i}: needs 'image', 'gt' and 'split'") from exc
        if split not in SPLITS:
            raise ManifestError(f"entry {i}: split must be one of {SPLITS}, got {split!r}")
        e = Entry(root / image, root / gt, split)
        if e.image in seen:
            raise ManifestError(f"entry {i}: duplicate image path {e.image}")
        seen.add(e.image)
        if check_files:
            for kind, p in (("image", e.image), ("gt", e.gt)):
                if not p.exists():
                    raise ManifestError(f"entry {i}: {kind} path {p} does not exist")
                try:
                    read_raster(p)
                except Exception as exc:
                    raise ManifestError(f"entry {i}: cannot parse {kind} {p}: {exc}") from exc
        entries.append(e)
    return DatasetManifest(root, tuple(entries))


def read_gt(path: str | os.PathLike) -> np.ndarray:
    gt = read_raster(path)
    return gt.mean(axis=2) if gt.ndim == 3 else gt


def target_faces(gt: np.ndarray, size: int) -> np.ndarray:
    """Min-max normalised ground truth projected at the central rotation, ``(6, l, l)``."""
    faces = erp_to_cmp(minmax_normalize(gt), Rotation(0.0, 0.0), size).faces
    return np.clip(faces, 0.0, 1.0)


def build_training_set(manifest: DatasetManifest, backend: BackendDescriptor,
                       rotations: Sequence[Rotation], size: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Six ``(tensor, target)`` samples per training image, ordered by image then face."""
    check_rotation_set(rotations)
    train = manifest.split("train")
    if not train:
        raise ManifestError("manifest has no training entries")
    samples = []
    for entry in train:
        erp = read_raster(entry.image)
        try:
            cmps = saliency_cubemaps(erp, backend, rotations, size, stem=entry.stem)
        except PipelineError as exc:
            raise PipelineError(f"{entry.image}: {exc.stage}", exc.cause) from exc
        tensors = stack_all_faces(cmps).astype(np.float32)
        targets = target_faces(read_gt(entry.gt), size)
        samples.extend((tensors[f], targets[f]) for f in range(6))
    return samples
