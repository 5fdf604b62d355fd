"""KLD, CC and BCE between saliency maps.

All reductions run in double precision.  ERP maps may optionally be weighted
by ``cos(latitude)`` per row to account for the solid angle of each pixel.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .imaging import normalize_to_distribution

EPS = 1e-7


@dataclass
class MetricReport:
    kld: float
    cc: float
    bce: Optional[float] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["bce"] is None:
            del d["bce"]
        return d


def latitude_weights(height: int, width: int) -> np.ndarray:
    """Per-pixel ``cos(phi)`` weights for an ERP grid, rows at pixel centres."""
    phi = np.pi / 2 - np.pi * (np.arange(height) + 0.5) / height
    return np.repeat(np.cos(phi)[:, None], width, axis=1)


def _pair(gt, pred):
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if gt.shape != pred.shape:
        raise ValueError(f"shape mismatch: {gt.shape} vs {pred.shape}")
    return gt, pred


def kld(gt, pred, weights=None) -> float:
    """``sum p * ln(p / (q + eps) + eps)`` over the sum-normalised maps."""
    gt, pred = _pair(gt, pred)
    if weights is not None:
        gt, pred = gt * weights, pred * weights
    p = normalize_to_distribution(gt)
    q = normalize_to_distribution(pred)
    return float(np.sum(p * np.log(p / (q + EPS) + EPS)))


def cc(gt, pred, weights=None) -> float:
    """Pearson correlation; 0 when either map is constant."""
    gt, pred = _pair(gt, pred)
    if gt.size < 2:
        raise ValueError("correlation needs at least two pixels")
    if weights is None:
        w = np.full(gt.shape, 1.0 / gt.size)
    else:
        w = np.asarray(weights, dtype=np.float64)
        w = w / w.sum()
    a = gt - np.sum(w * gt)
    b = pred - np.sum(w * pred)
    va, vb = np.sum(w * a * a), np.sum(w * b * b)
    if va <= 0 or vb <= 0:
        return 0.0
    r = np.sum(w * a * b) / np.sqrt(va * vb)
    return float(np.clip(r, -1.0, 1.0))


def bce(gt, pred, weights=None) -> float:
    gt, pred = _pair(gt, pred)
    if np.any(gt < 0) or np.any(gt > 1):
        raise ValueError("BCE targets must lie in [0, 1]")
    q = np.clip(pred, EPS, 1.0 - EPS)
    terms = -(gt * np.log(q) + (1.0 - gt) * np.log(1.0 - q))
    if weights is None:
        return float(terms.mean())
    w = np.asarray(weights, dtype=np.float64)
    return float(np.sum(w * terms) / w.sum())


def report(gt, pred, lat_weighted: bool = False, with_bce: bool = False) -> MetricReport:
    gt, pred = _pair(gt, pred)
    w = latitude_weights(*gt.shape[:2]) if lat_weighted else None
    out = MetricReport(kld=kld(gt, pred, w), cc=cc(gt, pred, w))
    if with_bce:
        out.bce = bce(gt, pred, w)
    return out
