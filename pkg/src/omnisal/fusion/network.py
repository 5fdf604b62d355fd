"""Input-fusion CNN: six zero-padded 7x7 convolutions, 5 -> 32 -> 64 -> 128 -> 64 -> 32 -> 1.

Layers 1-5 are conv + bias -> batch norm -> ReLU, layer 6 is conv + bias ->
sigmoid.  Tensors are NHWC; kernels are stored ``(7, 7, C_in, C_out)``.
Forward and backward passes are written out by hand on top of numpy matmuls.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

KERNEL = 7
PAD = KERNEL // 2
CHANNELS = (5, 32, 64, 128, 64, 32, 1)
BN_EPS = 1e-5
BN_MOMENTUM = 0.9


class DivergenceError(FloatingPointError):
    """Non-finite activations, losses or gradients."""


@dataclass
class ConvLayer:
    weight: np.ndarray
    bias: np.ndarray
    # batch-norm state, absent on the output layer
    gamma: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    running_mean: Optional[np.ndarray] = None
    running_var: Optional[np.ndarray] = None

    @property
    def has_bn(self) -> bool:
        return self.gamma is not None

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        out = [("weight", self.weight), ("bias", self.bias)]
        if self.has_bn:
            out += [("gamma", self.gamma), ("beta", self.beta),
                    ("running_mean", self.running_mean), ("running_var", self.running_var)]
        return out


@dataclass
class FusionNetwork:
    layers: list[ConvLayer] = field(default_factory=list)

    @property
    def in_channels(self) -> int:
        return self.layers[0].weight.shape[2]

    def parameters(self) -> Iterator[tuple[str, np.ndarray]]:
        """Trainable arrays keyed ``"<layer>.<name>"`` (running statistics excluded)."""
        for i, layer in enumerate(self.layers):
            for name, arr in layer.arrays():
                if not name.startswith("running"):
                    yield f"{i}.{name}", arr

    def state(self) -> Iterator[tuple[str, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            for name, arr in layer.arrays():
                yield f"{i}.{name}", arr

    def get(self, key: str) -> np.ndarray:
        i, name = key.split(".")
        return getattr(self.layers[int(i)], name)

    def set(self, key: str, value: np.ndarray) -> None:
        i, name = key.split(".")
        setattr(self.layers[int(i)], name, value)

    def copy(self) -> "FusionNetwork":
        return FusionNetwork([ConvLayer(**{k: v.copy() for k, v in layer.arrays()}) for layer in self.layers])

    def astype(self, dtype) -> "FusionNetwork":
        return FusionNetwork([ConvLayer(**{k: v.astype(dtype) for k, v in layer.arrays()})
                              for layer in self.layers])


def init_weights(seed: int = 0, channels=CHANNELS, dtype=np.float32) -> FusionNetwork:
    """He-scaled uniform kernels (variance ``2 / fan_in``), zero biases, identity batch norm."""
    rng = np.random.default_rng(seed)
    layers = []
    n = len(channels) - 1
    for i in range(n):
        cin, cout = channels[i], channels[i + 1]
        fan_in = KERNEL * KERNEL * cin
        limit = np.sqrt(6.0 / fan_in)  # U(-a, a) has variance a^2 / 3
        w = rng.uniform(-limit, limit, size=(KERNEL, KERNEL, cin, cout)).astype(dtype)
        layer = ConvLayer(weight=w, bias=np.zeros(cout, dtype))
        if i < n - 1:
            layer.gamma = np.ones(cout, dtype)
            layer.beta = np.zeros(cout, dtype)
            layer.running_mean = np.zeros(cout, dtype)
            layer.running_var = np.ones(cout, dtype)
        layers.append(layer)
    return FusionNetwork(layers)


# --- primitives --------------------------------------------------------------


def _pad(x: np.ndarray) -> np.ndarray:
    return np.pad(x, ((0, 0), (PAD, PAD), (PAD, PAD), (0, 0)))


def _im2col(xp: np.ndarray, h: int, wd: int) -> np.ndarray:
    cols = sliding_window_view(xp, (KERNEL, KERNEL), axis=(0, 1))
    return cols.transpose(0, 1, 3, 4, 2).reshape(h * wd, -1)


def conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """'Same' zero-padded cross-correlation of NHWC ``x`` with ``w`` plus bias."""
    n, h, wd, cin = x.shape
    cout = w.shape[3]
    xp = _pad(x)
    out = np.zeros((n, h, wd, cout), dtype=x.dtype)
    if cin <= 8 or cout <= 8:
        # thin matmuls are memory bound; one im2col product per sample is faster
        wm = w.reshape(-1, cout)
        for i in range(n):
            out[i] = (_im2col(xp[i], h, wd) @ wm).reshape(h, wd, cout)
    else:
        for dy in range(KERNEL):
            for dx in range(KERNEL):
                out += xp[:, dy:dy + h, dx:dx + wd, :] @ w[dy, dx]
    out += b
    return out


def conv_backward(x: np.ndarray, w: np.ndarray, dout: np.ndarray, need_dx: bool = True):
    """Gradients of :func:`conv_forward` w.r.t. weight, bias and (optionally) input."""
    n, h, wd, cin = x.shape
    cout = w.shape[3]
    xp = _pad(x)
    dw = np.zeros((KERNEL * KERNEL * cin, cout), dtype=w.dtype)
    # one im2col block per sample bounds memory at l*l*49*C_in values
    for i in range(n):
        dw += _im2col(xp[i], h, wd).T @ dout[i].reshape(-1, cout)
    dw = dw.reshape(KERNEL, KERNEL, cin, cout)
    db = dout.sum(axis=(0, 1, 2), dtype=np.float64).astype(w.dtype)
    dx = None
    if need_dx:
        # input gradient is the correlation with the spatially flipped, channel-transposed kernel
        flipped = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2))
        dx = conv_forward(dout, flipped, np.zeros(cin, dtype=dout.dtype))
    return dw, db, dx


def sigmoid(z: np.ndarray) -> np.ndarray:
    z64 = np.asarray(z, dtype=np.float64)
    s = np.empty_like(z64)
    pos = z64 >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-z64[pos]))
    e = np.exp(z64[~pos])
    s[~pos] = e / (1.0 + e)
    s = s.astype(z.dtype)
    # keep the output strictly inside (0, 1) after rounding
    return np.clip(s, np.finfo(z.dtype).tiny, np.nextafter(z.dtype.type(1), z.dtype.type(0)))


# --- network passes ----------------------------------------------------------


@dataclass
class ForwardCache:
    inputs: list = field(default_factory=list)      # input to each conv
    xhat: list = field(default_factory=list)        # normalised pre-activations (BN layers)
    inv_std: list = field(default_factory=list)
    batch_mean: list = field(default_factory=list)
    batch_var: list = field(default_factory=list)
    relu_mask: list = field(default_factory=list)
    output: Optional[np.ndarray] = None
    train: bool = True


def _as_batch(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4:
        raise ValueError(f"expected (N, H, W, C) or (H, W, C) input, got shape {x.shape}")
    return x


def forward(net: FusionNetwork, x: np.ndarray, train: bool = False, dtype=None):
    """Run the network on NHWC input; returns ``(output (N, H, W), cache)``.

    ``train`` selects batch statistics for batch norm, otherwise running
    statistics are used.  Running statistics are never modified here; see
    :func:`update_running_stats`.
    """
    x = _as_batch(x)
    dtype = np.dtype(dtype or (x.dtype if x.dtype.kind == "f" else np.float32))
    if x.shape[3] != net.in_channels:
        raise ValueError(f"network expects {net.in_channels} input channels, got {x.shape[3]}")
    a = x.astype(dtype, copy=False)
    cache = ForwardCache(train=train)
    for layer in net.layers:
        cache.inputs.append(a)
        z = conv_forward(a, layer.weight.astype(dtype, copy=False), layer.bias.astype(dtype, copy=False))
        # ReLU would silently zero NaNs, so check every pre-activation
        if not np.isfinite(z).all():
            raise DivergenceError(f"non-finite pre-activations in fusion layer {len(cache.inputs)}")
        if layer.has_bn:
            if train:
                mean = z.mean(axis=(0, 1, 2), dtype=np.float64)
                var = np.square(z - mean.astype(dtype)).mean(axis=(0, 1, 2), dtype=np.float64)
            else:
                mean = layer.running_mean.astype(np.float64)
                var = layer.running_var.astype(np.float64)
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (z - mean.astype(dtype)) * inv_std.astype(dtype)
            z = xhat * layer.gamma.astype(dtype) + layer.beta.astype(dtype)
            mask = z > 0
            a = np.where(mask, z, dtype.type(0))
            cache.xhat.append(xhat)
            cache.inv_std.append(inv_std)
            cache.batch_mean.append(mean)
            cache.batch_var.append(var)
            cache.relu_mask.append(mask)
        else:
            a = sigmoid(z)
    out = a[..., 0]
    cache.output = out
    return out, cache


def backward(net: FusionNetwork, cache: ForwardCache, dout: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients for every trainable parameter given ``dL/d(output)``, shape (N, H, W).

    Only valid for a train-mode cache (batch statistics differentiated through).
    """
    if not cache.train:
        raise ValueError("backward requires a train-mode forward cache")
    dtype = cache.output.dtype
    grads: dict[str, np.ndarray] = {}
    s = cache.output[..., None]
    g = (np.asarray(dout, dtype=dtype)[..., None] * s * (1 - s)).astype(dtype)
    bn_idx = len(cache.xhat)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.has_bn:
            bn_idx -= 1
            g = np.where(cache.relu_mask[bn_idx], g, dtype.type(0))
            xhat = cache.xhat[bn_idx]
            grads[f"{i}.gamma"] = (g * xhat).sum(axis=(0, 1, 2), dtype=np.float64).astype(layer.gamma.dtype)
            grads[f"{i}.beta"] = g.sum(axis=(0, 1, 2), dtype=np.float64).astype(layer.beta.dtype)
            dxhat = g * layer.gamma.astype(dtype)
            mean_d = dxhat.mean(axis=(0, 1, 2), dtype=np.float64)
            mean_dx = (dxhat * xhat).mean(axis=(0, 1, 2), dtype=np.float64)
            g = (dxhat - mean_d.astype(dtype) - xhat * mean_dx.astype(dtype)) * cache.inv_std[bn_idx].astype(dtype)
        dw, db, dx = conv_backward(cache.inputs[i], layer.weight.astype(dtype, copy=False), g, need_dx=i > 0)
        grads[f"{i}.weight"] = dw.astype(layer.weight.dtype)
        grads[f"{i}.bias"] = db.astype(layer.bias.dtype)
        g = dx
    for k, v in grads.items():
        if not np.all(np.isfinite(v)):
            raise DivergenceError(f"non-finite gradient for {k}")
    return grads


def update_running_stats(net: FusionNetwork, cache: ForwardCache, momentum: float = BN_MOMENTUM) -> None:
    """Blend the batch statistics of a train-mode pass into the running estimates."""
    bn_layers = [layer for layer in net.layers if layer.has_bn]
    for layer, mean, var in zip(bn_layers, cache.batch_mean, cache.batch_var):
        layer.running_mean = (momentum * layer.running_mean + (1 - momentum) * mean).astype(layer.running_mean.dtype)
        layer.running_var = (momentum * layer.running_var + (1 - momentum) * var).astype(layer.running_var.dtype)


def predict(net: FusionNetwork, x: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Inference-mode output for one ``(l, l, 5)`` tensor, returned as an ``(l, l)`` map."""
    out, _ = forward(net, x, train=False, dtype=dtype)
    return out[0] if np.asarray(x).ndim == 3 else out
