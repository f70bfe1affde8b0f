"""Minimal deterministic neural-network engine.

Two independently seeded networks drive the co-teaching loops, so this
module is built around three hard guarantees rather than generality:

* bitwise determinism: identical spec + seed -> identical parameters,
  identical batches -> identical updates, across runs;
* per-sample losses (no batch reduction) so samples can be ranked;
* exact analytic gradients of the mean 2-logit softmax cross-entropy,
  tight enough to pass central finite differences in double precision.

Supported layers: valid (unpadded) strided 2D convolution, dense, and
leaky ReLU. Data layout is channels-last: (B, H, W, C). Everything is
float64.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, NumericError

__all__ = [
    "Conv",
    "Dense",
    "LeakyRelu",
    "NetworkSpec",
    "Network",
    "Batch",
    "init_network",
    "per_sample_loss",
    "predict",
    "sgd_step",
    "loss_and_gradients",
]


# ---------------------------------------------------------------------------
# layer descriptors and the network spec


@dataclass(frozen=True)
class Conv:
    """Valid 2D convolution: `channels` output maps, square kernel, stride."""

    channels: int
    kernel_size: int
    stride: int = 1


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class LeakyRelu:
    slope: float = 0.1


LayerDesc = Conv | Dense | LeakyRelu

INIT_SCHEMES = ("he_uniform", "zeros")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture + init scheme + seed. Fully determines the parameters."""

    input_size: int
    channels: int
    layers: tuple
    init: str = "he_uniform"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.init not in INIT_SCHEMES:
            raise ConfigError(f"unknown init scheme {self.init!r}")
        layer_plan(self)  # validates dimensions eagerly

    def to_string(self) -> str:
        """Compact layer grammar used in config files (see parse_layers)."""
        parts = []
        for layer in self.layers:
            if isinstance(layer, Conv):
                parts.append(f"conv({layer.channels},{layer.kernel_size},{layer.stride})")
            elif isinstance(layer, Dense):
                parts.append(f"dense({layer.in_dim},{layer.out_dim})")
            elif isinstance(layer, LeakyRelu):
                parts.append(f"lrelu({layer.slope:g})")
        return " ".join(parts)


_LAYER_RE = re.compile(r"^(conv|dense|lrelu)\(([^()]*)\)$")


def parse_layers(text: str) -> tuple:
    """Parse the layer grammar: ``conv(C,K,S) lrelu(a) dense(IN,OUT)``.

    Tokens are whitespace-separated; conv stride defaults to 1.
    """
    layers = []
    for token in text.split():
        m = _LAYER_RE.match(token)
        if m is None:
            raise ConfigError(f"cannot parse network layer {token!r}")
        name, args = m.group(1), [a.strip() for a in m.group(2).split(",") if a.strip()]
        try:
            if name == "conv":
                if len(args) == 2:
                    layers.append(Conv(int(args[0]), int(args[1])))
                else:
                    layers.append(Conv(int(args[0]), int(args[1]), int(args[2])))
            elif name == "dense":
                layers.append(Dense(int(args[0]), int(args[1])))
            else:
                layers.append(LeakyRelu(float(args[0])) if args else LeakyRelu())
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"bad arguments in network layer {token!r}") from exc
    if not layers:
        raise ConfigError("network description is empty")
    return tuple(layers)


def layer_plan(spec: NetworkSpec):
    """Walk the layer list, checking shape compatibility.

    Returns a list of (layer, input_shape) entries where input_shape is
    (H, W, C) for spatial tensors or (D,) once flattened. Raises
    ConfigError on any inconsistency, including a final output != 2.
    """
    if spec.input_size < 1 or spec.channels < 1:
        raise ConfigError("input_size and channels must be >= 1")
    shape = (spec.input_size, spec.input_size, spec.channels)
    plan = []
    for i, layer in enumerate(spec.layers):
        plan.append((layer, shape))
        if isinstance(layer, Conv):
            if len(shape) != 3:
                raise ConfigError(f"layer {i}: conv after flatten is not supported")
            h, w, _ = shape
            k, s = layer.kernel_size, layer.stride
            if k < 1 or s < 1 or layer.channels < 1:
                raise ConfigError(f"layer {i}: conv parameters must be positive")
            if h < k or w < k:
                raise ConfigError(f"layer {i}: kernel {k} larger than input {h}x{w}")
            shape = ((h - k) // s + 1, (w - k) // s + 1, layer.channels)
        elif isinstance(layer, Dense):
            flat = int(np.prod(shape))
            if layer.in_dim != flat:
                raise ConfigError(
                    f"layer {i}: dense expects in_dim={layer.in_dim} but receives {flat}"
                )
            if layer.out_dim < 1:
                raise ConfigError(f"layer {i}: dense out_dim must be >= 1")
            shape = (layer.out_dim,)
        elif isinstance(layer, LeakyRelu):
            pass
        else:
            raise ConfigError(f"layer {i}: unknown layer type {type(layer).__name__}")
    if shape != (2,):
        raise ConfigError(f"network must end in exactly 2 logits, got shape {shape}")
    return plan


# ---------------------------------------------------------------------------
# network value and batches


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable parameter snapshot; updates produce new Network values."""

    spec: NetworkSpec
    params: tuple  # one (W, b) pair per parametric layer, in layer order

    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in self.params)


@dataclass(frozen=True, eq=False)
class Batch:
    """A mini-batch: images (B,m,m,C) in [0,1], labels in {0,1}, and the
    sample indices into the parent dataset (used for diagnostics)."""

    x: np.ndarray
    y: np.ndarray
    indices: np.ndarray = field(default=None)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if x.ndim != 4:
            raise ValueError(f"batch x must be 4D (B,H,W,C), got shape {x.shape}")
        if x.shape[0] < 1:
            raise ValueError("batch must contain at least one sample")
        if y.shape != (x.shape[0],):
            raise ValueError("labels must have length B")
        idx = self.indices
        idx = np.arange(x.shape[0], dtype=np.int64) if idx is None else np.asarray(idx, dtype=np.int64)
        if idx.shape != (x.shape[0],):
            raise ValueError("indices must have length B")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return self.x.shape[0]


def init_network(spec: NetworkSpec) -> Network:
    """Draw parameters deterministically from spec.seed.

    he_uniform: weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases 0.
    zeros: everything 0 (useful for analytic sanity checks only).
    """
    rng = np.random.default_rng(spec.seed)
    params = []
    for layer, shape in layer_plan(spec):
        if isinstance(layer, Conv):
            k, c_in = layer.kernel_size, shape[2]
            fan_in = k * k * c_in
            wshape = (k, k, c_in, layer.channels)
            bshape = (layer.channels,)
        elif isinstance(layer, Dense):
            fan_in = layer.in_dim
            wshape = (layer.in_dim, layer.out_dim)
            bshape = (layer.out_dim,)
        else:
            continue
        if spec.init == "zeros":
            w = np.zeros(wshape)
        else:
            limit = math.sqrt(6.0 / fan_in)
            w = rng.uniform(-limit, limit, size=wshape)
        params.append((w, np.zeros(bshape)))
    return Network(spec=spec, params=tuple(params))


# ---------------------------------------------------------------------------
# forward / backward


def _check_batch(net: Network, batch: Batch):
    expect = (net.spec.input_size, net.spec.input_size, net.spec.channels)
    if batch.x.shape[1:] != expect:
        raise ValueError(f"batch shape {batch.x.shape[1:]} does not match spec input {expect}")


def _forward(net: Network, x: np.ndarray, check: bool = True):
    """Run the network, keeping per-layer caches for backprop.

    Returns (logits, caches). Cache entries hold whatever the matching
    backward step needs. Raises NumericError naming the first layer that
    produced a non-finite activation.
    """
    caches = []
    out = x
    p = 0
    for i, layer in enumerate(net.spec.layers):
        if isinstance(layer, Conv):
            w, b = net.params[p]
            p += 1
            s = layer.stride
            windows = sliding_window_view(out, (layer.kernel_size, layer.kernel_size), axis=(1, 2))
            windows = windows[:, ::s, ::s]  # (B, H', W', C, k, k)
            caches.append(("conv", windows, layer, out.shape))
            out = np.tensordot(windows, w, axes=([3, 4, 5], [2, 0, 1])) + b
        elif isinstance(layer, Dense):
            w, b = net.params[p]
            p += 1
            pre_shape = out.shape
            flat = out.reshape(out.shape[0], -1)
            caches.append(("dense", flat, pre_shape))
            out = flat @ w + b
        else:  # LeakyRelu
            caches.append(("lrelu", out, layer))
            out = np.where(out > 0, out, layer.slope * out)
        if check and not np.all(np.isfinite(out)):
            raise NumericError(f"non-finite activations after layer {i}", layer=i)
    return out, caches


def _backward(net: Network, caches, dlogits: np.ndarray):
    """Push dlogits back through the caches; returns grads aligned with
    net.params (list of (dW, db))."""
    grads = [None] * len(net.params)
    d = dlogits
    p = len(net.params)
    for cache in reversed(caches):
        kind = cache[0]
        if kind == "dense":
            _, flat, pre_shape = cache
            p -= 1
            w, _ = net.params[p]
            grads[p] = (flat.T @ d, d.sum(axis=0))
            d = (d @ w.T).reshape(pre_shape)
        elif kind == "conv":
            _, windows, layer, in_shape = cache
            p -= 1
            w, _ = net.params[p]
            k, s = layer.kernel_size, layer.stride
            # dW: contract batch and spatial output dims
            dw = np.tensordot(windows, d, axes=([0, 1, 2], [0, 1, 2]))  # (C,k,k,O)
            dw = dw.transpose(1, 2, 0, 3)
            db = d.sum(axis=(0, 1, 2))
            grads[p] = (dw, db)
            _, hp, wp, _ = d.shape
            dx = np.zeros(in_shape)
            for u in range(k):
                for v in range(k):
                    dx[:, u : u + s * hp : s, v : v + s * wp : s, :] += np.tensordot(
                        d, w[u, v], axes=([3], [1])
                    )
            d = dx
        else:  # lrelu
            _, pre, layer = cache
            d = np.where(pre > 0, d, layer.slope * d)
    return grads


def _per_sample_ce(logits: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Stable 2-logit softmax cross-entropy, elementwise over the batch.

    loss_i = softplus(z_wrong - z_true); exactly ln 2 at equal logits.
    """
    z_true = logits[np.arange(len(y)), y]
    z_wrong = logits[np.arange(len(y)), 1 - y]
    t = z_wrong - z_true
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def per_sample_loss(net: Network, batch: Batch) -> np.ndarray:
    """Cross-entropy of each sample under the current parameters, length B.

    No reduction: the co-teaching selection ranks these directly.
    """
    _check_batch(net, batch)
    logits, _ = _forward(net, batch.x)
    return _per_sample_ce(logits, batch.y)


def predict(net: Network, x) -> np.ndarray:
    """Argmax label per sample of a raw (B,H,W,C) array; ties resolve to
    label 0. No labels needed, unlike the loss entry points."""
    x = np.asarray(x, dtype=np.float64)
    expect = (net.spec.input_size, net.spec.input_size, net.spec.channels)
    if x.ndim != 4 or x.shape[1:] != expect:
        raise ValueError(f"input shape {x.shape} does not match spec input {expect}")
    logits, _ = _forward(net, x)
    return np.argmax(logits, axis=1).astype(np.int64)


def loss_and_gradients(net: Network, batch: Batch):
    """Mean batch loss plus exact gradients of it w.r.t. every parameter."""
    _check_batch(net, batch)
    logits, caches = _forward(net, batch.x)
    losses = _per_sample_ce(logits, batch.y)
    b = len(batch)
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs = expz / expz.sum(axis=1, keepdims=True)
    dlogits = probs.copy()
    dlogits[np.arange(b), batch.y] -= 1.0
    dlogits /= b
    grads = _backward(net, caches, dlogits)
    for i, (dw, db) in enumerate(grads):
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise NumericError(f"non-finite gradient in parametric layer {i}", layer=i)
    return float(losses.mean()), grads


def sgd_step(net: Network, batch: Batch, lr: float) -> Network:
    """One plain gradient step on the mean batch cross-entropy."""
    if lr < 0:
        raise ConfigError("learning rate must be >= 0")
    _, grads = loss_and_gradients(net, batch)
    new_params = tuple(
        (w - lr * dw, b - lr * db) for (w, b), (dw, db) in zip(net.params, grads)
    )
    return replace(net, params=new_params)
