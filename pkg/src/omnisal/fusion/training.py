"""Mini-batch training of the fusion network."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Optional, Sequence

import numpy as np

from .loss import LossWeights, batch_loss
from .network import DivergenceError, FusionNetwork, backward, forward, init_weights, update_running_stats
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 20
    lr: float = 1e-4
    batch_size: int = 8
    weight_decay: float = 1e-4
    alpha: float = 0.5
    beta: float = 0.25
    gamma: float = 0.25
    seed: int = 0
    face_size: int = 512

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.alpha, self.beta, self.gamma)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "lambda" in d:
            d["weight_decay"] = d.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("weight_decay")
        return d


@dataclass
class TrainResult:
    network: FusionNetwork
    epoch_losses: list[float] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)


def train_step(net: FusionNetwork, opt: AdamState, x: np.ndarray, y: np.ndarray,
               weights: LossWeights, dtype=np.float32) -> float:
    """One forward/backward/update on a batch; mutates ``net`` and ``opt``."""
    out, cache = forward(net, x, train=True, dtype=dtype)
    value, dout = batch_loss(y, out, weights)
    if not math.isfinite(value):
        raise DivergenceError(f"non-finite loss at optimiser step {opt.step}")
    grads = backward(net, cache, dout)
    update_running_stats(net, cache)
    params = dict(net.parameters())
    for k, v in adam_step(opt, params, grads).items():
        net.set(k, v)
    return value


def train_fusion(samples: Sequence[tuple[np.ndarray, np.ndarray]], config: TrainConfig = TrainConfig(),
                 net: Optional[FusionNetwork] = None,
                 on_epoch: Optional[Callable[[int, float], None]] = None) -> TrainResult:
    """Train on ``(tensor (l, l, 5), target (l, l))`` pairs; targets must lie in [0, 1].

    Batches are drawn from a per-epoch permutation seeded by ``config.seed``.
    """
    if len(samples) == 0:
        raise ValueError("training set is empty")
    xs = np.stack([np.asarray(s[0], dtype=np.float32) for s in samples])
    ys = np.stack([np.asarray(s[1], dtype=np.float64) for s in samples])
    if np.any(ys < 0) or np.any(ys > 1):
        raise ValueError("training targets must be min-max normalised to [0, 1]")
    net = init_weights(config.seed) if net is None else net
    opt = AdamState(lr=config.lr, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    result = TrainResult(net)
    w = config.loss_weights
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples))
        losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            value = train_step(net, opt, xs[idx], ys[idx], w)
            losses.append(value)
            result.step_losses.append(value)
        mean = float(np.mean(losses))
        result.epoch_losses.append(mean)
        log.info("epoch %d/%d  loss %.5f", epoch + 1, config.epochs, mean)
        if on_epoch is not None:
            on_epoch(epoch, mean)
    return result
