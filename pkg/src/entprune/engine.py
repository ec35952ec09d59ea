"""Minimal deterministic CNN engine.

Dense float64 numpy arrays are the only numeric carrier. The layer set is
fixed (Conv2D / MaxPool2D / Activation / Flatten / Dense / SoftmaxCrossEntropy)
and every operation is deterministic given its inputs, so fixed seeds yield
bit-identical checkpoints. Convolutions run through im2col + matmul; the
nested-loop reference used by the test suite lives with the tests, not here.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Conv2D",
    "MaxPool2D",
    "Activation",
    "Flatten",
    "Dense",
    "SoftmaxCrossEntropy",
    "Network",
    "SgdConfig",
    "EngineError",
    "ShapeMismatchError",
    "NumericError",
    "CheckpointError",
    "BadMagicError",
    "BadVersionError",
    "TruncatedCheckpointError",
    "LengthMismatchError",
    "init_network",
    "forward",
    "softmax_cross_entropy",
    "loss_and_grads",
    "sgd_step",
    "count_flops",
    "param_bytes",
    "evaluate",
    "serialize_network",
    "deserialize_network",
    "save_checkpoint",
    "load_checkpoint",
]


class EngineError(Exception):
    """Base class for engine failures."""


class ShapeMismatchError(EngineError):
    """Input or parameter shape incompatible with a layer; message names the layer."""


class NumericError(EngineError):
    """Non-finite value produced; message names the offending sample."""


class CheckpointError(EngineError):
    """Base class for checkpoint I/O failures."""


class BadMagicError(CheckpointError):
    pass


class BadVersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class LengthMismatchError(CheckpointError):
    pass


# --------------------------------------------------------------------------
# Layer specs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Conv2D:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0


@dataclass(frozen=True)
class MaxPool2D:
    window: int
    stride: int | None = None  # None = non-overlapping (stride == window)

    @property
    def effective_stride(self) -> int:
        return self.window if self.stride is None else self.stride


@dataclass(frozen=True)
class Activation:
    fn: str  # "relu" or "tanh"


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int


@dataclass(frozen=True)
class SoftmaxCrossEntropy:
    pass


LayerSpec = Conv2D | MaxPool2D | Activation | Flatten | Dense | SoftmaxCrossEntropy

_LAYER_KINDS = {
    cls.__name__: cls
    for cls in (Conv2D, MaxPool2D, Activation, Flatten, Dense, SoftmaxCrossEntropy)
}


def spec_to_dict(spec: LayerSpec) -> dict:
    d = {"kind": type(spec).__name__}
    for name in spec.__dataclass_fields__:
        d[name] = getattr(spec, name)
    return d


def spec_from_dict(d: dict) -> LayerSpec:
    d = dict(d)
    kind = d.pop("kind")
    if kind not in _LAYER_KINDS:
        raise CheckpointError(f"unknown layer kind {kind!r}")
    return _LAYER_KINDS[kind](**d)


# --------------------------------------------------------------------------
# Network
# --------------------------------------------------------------------------

@dataclass
class Network:
    """Ordered layer list plus per-layer parameters and freeze sets.

    ``weights[i]``/``biases[i]`` are None for parameterless layers. ``freeze``
    maps conv ordinal (0-based position among Conv2D layers) to the set of
    filter indices whose weights and bias SGD must leave untouched.
    """

    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]  # (C, H, W)
    weights: list[np.ndarray | None]
    biases: list[np.ndarray | None]
    freeze: dict[int, frozenset[int]] = field(default_factory=dict)

    def copy(self) -> "Network":
        return Network(
            layers=self.layers,
            input_shape=self.input_shape,
            weights=[None if w is None else w.copy() for w in self.weights],
            biases=[None if b is None else b.copy() for b in self.biases],
            freeze={k: frozenset(v) for k, v in self.freeze.items()},
        )

    @property
    def conv_layer_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.layers) if isinstance(s, Conv2D)]

    @property
    def conv_specs(self) -> list[Conv2D]:
        return [s for s in self.layers if isinstance(s, Conv2D)]

    def filter_counts(self) -> list[int]:
        """Output-channel count per conv layer, in conv-ordinal order."""
        return [s.out_channels for s in self.conv_specs]

    def total_filters(self) -> int:
        return sum(self.filter_counts())


def layer_output_shapes(net: Network) -> list[tuple[int, ...]]:
    """Per-layer output shapes (sample shapes, batch axis excluded).

    Raises ShapeMismatchError naming the first incompatible layer.
    """
    shapes = []
    cur: tuple[int, ...] = net.input_shape
    for i, spec in enumerate(net.layers):
        if isinstance(spec, Conv2D):
            if len(cur) != 3 or cur[0] != spec.in_channels:
                raise ShapeMismatchError(
                    f"layer {i} (Conv2D) expects {spec.in_channels} input channels, got shape {cur}"
                )
            c, h, w = cur
            ho = (h + 2 * spec.padding - spec.kernel) // spec.stride + 1
            wo = (w + 2 * spec.padding - spec.kernel) // spec.stride + 1
            if ho <= 0 or wo <= 0:
                raise ShapeMismatchError(f"layer {i} (Conv2D) output would be empty for input {cur}")
            cur = (spec.out_channels, ho, wo)
        elif isinstance(spec, MaxPool2D):
            if len(cur) != 3:
                raise ShapeMismatchError(f"layer {i} (MaxPool2D) needs a C,H,W input, got {cur}")
            c, h, w = cur
            s = spec.effective_stride
            ho = (h - spec.window) // s + 1
            wo = (w - spec.window) // s + 1
            if ho <= 0 or wo <= 0:
                raise ShapeMismatchError(f"layer {i} (MaxPool2D) output would be empty for input {cur}")
            cur = (c, ho, wo)
        elif isinstance(spec, Activation):
            pass
        elif isinstance(spec, Flatten):
            cur = (int(np.prod(cur)),)
        elif isinstance(spec, Dense):
            if len(cur) != 1 or cur[0] != spec.in_features:
                raise ShapeMismatchError(
                    f"layer {i} (Dense) expects {spec.in_features} features, got shape {cur}"
                )
            cur = (spec.out_features,)
        elif isinstance(spec, SoftmaxCrossEntropy):
            pass
        shapes.append(cur)
    return shapes


def validate_network(net: Network) -> None:
    """Check parameter shapes against the layer specs and freeze-set bounds."""
    layer_output_shapes(net)  # raises on inter-layer incompatibility
    for i, spec in enumerate(net.layers):
        w, b = net.weights[i], net.biases[i]
        if isinstance(spec, Conv2D):
            want_w = (spec.out_channels, spec.in_channels, spec.kernel, spec.kernel)
            if w is None or w.shape != want_w:
                raise ShapeMismatchError(f"layer {i} (Conv2D) weight shape {None if w is None else w.shape} != {want_w}")
            if b is None or b.shape != (spec.out_channels,):
                raise ShapeMismatchError(f"layer {i} (Conv2D) bias shape mismatch")
        elif isinstance(spec, Dense):
            want_w = (spec.out_features, spec.in_features)
            if w is None or w.shape != want_w:
                raise ShapeMismatchError(f"layer {i} (Dense) weight shape {None if w is None else w.shape} != {want_w}")
            if b is None or b.shape != (spec.out_features,):
                raise ShapeMismatchError(f"layer {i} (Dense) bias shape mismatch")
        elif w is not None or b is not None:
            raise ShapeMismatchError(f"layer {i} ({type(spec).__name__}) must not carry parameters")
    counts = net.filter_counts()
    for ordinal, idxs in net.freeze.items():
        if ordinal < 0 or ordinal >= len(counts):
            raise ShapeMismatchError(f"freeze set names conv ordinal {ordinal}, network has {len(counts)} conv layers")
        bad = [f for f in idxs if f < 0 or f >= counts[ordinal]]
        if bad:
            raise ShapeMismatchError(f"freeze set of conv {ordinal} names filters {bad} >= {counts[ordinal]}")


def init_network(
    layers: list[LayerSpec] | tuple[LayerSpec, ...],
    input_shape: tuple[int, int, int],
    seed: int,
) -> Network:
    """Kaiming-uniform initialization (fan-in scaled) from one seeded generator."""
    rng = np.random.default_rng(seed)
    weights: list[np.ndarray | None] = []
    biases: list[np.ndarray | None] = []
    for spec in layers:
        if isinstance(spec, Conv2D):
            fan_in = spec.in_channels * spec.kernel * spec.kernel
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(spec.out_channels, spec.in_channels, spec.kernel, spec.kernel))
            b = rng.uniform(-1.0 / np.sqrt(fan_in), 1.0 / np.sqrt(fan_in), size=spec.out_channels)
        elif isinstance(spec, Dense):
            fan_in = spec.in_features
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(spec.out_features, spec.in_features))
            b = rng.uniform(-1.0 / np.sqrt(fan_in), 1.0 / np.sqrt(fan_in), size=spec.out_features)
        else:
            w = b = None
        weights.append(w)
        biases.append(b)
    net = Network(tuple(layers), tuple(input_shape), weights, biases)
    validate_network(net)
    return net


# --------------------------------------------------------------------------
# Forward / backward primitives
# --------------------------------------------------------------------------

def _im2col(x: np.ndarray, kernel: int, stride: int, padding: int):
    """(N,C,H,W) -> column matrix (N, C*k*k, Ho*Wo) plus the output extent.

    Built by k*k strided-slice assignments; this layout feeds a batched gemm
    with no output transpose and scatters back without transposes either.
    """
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    n, c, hp, wp = x.shape
    ho = (hp - kernel) // stride + 1
    wo = (wp - kernel) // stride + 1
    cols = np.empty((n, c, kernel, kernel, ho, wo))
    for ki in range(kernel):
        for kj in range(kernel):
            cols[:, :, ki, kj] = x[
                :, :, ki : ki + (ho - 1) * stride + 1 : stride,
                kj : kj + (wo - 1) * stride + 1 : stride,
            ]
    return cols.reshape(n, c * kernel * kernel, ho * wo), (ho, wo)


def _col2im(dcols: np.ndarray, x_shape, kernel: int, stride: int, padding: int) -> np.ndarray:
    """Scatter-add column gradients back to input layout; inverse of _im2col."""
    n, c, h, w = x_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    ho = (hp - kernel) // stride + 1
    wo = (wp - kernel) // stride + 1
    d6 = dcols.reshape(n, c, kernel, kernel, ho, wo)
    dxp = np.zeros((n, c, hp, wp))
    for ki in range(kernel):
        for kj in range(kernel):
            dxp[:, :, ki : ki + (ho - 1) * stride + 1 : stride,
                kj : kj + (wo - 1) * stride + 1 : stride] += d6[:, :, ki, kj]
    if padding:
        return dxp[:, :, padding : padding + h, padding : padding + w]
    return dxp


def _conv_forward(x, spec: Conv2D, w, b, layer_idx: int):
    if x.ndim != 4 or x.shape[1] != spec.in_channels:
        raise ShapeMismatchError(
            f"layer {layer_idx} (Conv2D) expects (N,{spec.in_channels},H,W), got {x.shape}"
        )
    n = x.shape[0]
    cols, (ho, wo) = _im2col(x, spec.kernel, spec.stride, spec.padding)
    wflat = w.reshape(spec.out_channels, -1)
    out = np.matmul(wflat, cols) + b[:, None]  # (N, Cout, Ho*Wo)
    return out.reshape(n, spec.out_channels, ho, wo), cols


def _conv_backward(dout, cols, x_shape, spec: Conv2D, w):
    n = dout.shape[0]
    p = dout.shape[2] * dout.shape[3]
    dout2 = dout.reshape(n, spec.out_channels, p)
    wflat = w.reshape(spec.out_channels, -1)
    dw = np.matmul(dout2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    db = dout.sum(axis=(0, 2, 3))
    dcols = np.matmul(wflat.T, dout2)  # (N, C*k*k, P)
    dx = _col2im(dcols, x_shape, spec.kernel, spec.stride, spec.padding)
    return dx, dw, db


def _pool_forward(x, spec: MaxPool2D, layer_idx: int):
    if x.ndim != 4:
        raise ShapeMismatchError(f"layer {layer_idx} (MaxPool2D) expects (N,C,H,W), got {x.shape}")
    s = spec.effective_stride
    w = spec.window
    n, c = x.shape[:2]
    if s == w:
        # non-overlapping fast path: crop to full windows and fold
        ho = (x.shape[2] - w) // s + 1
        wo = (x.shape[3] - w) // s + 1
        r = x[:, :, : ho * s, : wo * s].reshape(n, c, ho, w, wo, w)
        flat = np.ascontiguousarray(r.transpose(0, 1, 2, 4, 3, 5)).reshape(n, c, ho, wo, w * w)
    else:
        win = np.lib.stride_tricks.sliding_window_view(x, (w, w), axis=(2, 3))
        win = win[:, :, ::s, ::s]  # (N, C, Ho, Wo, w, w)
        ho, wo = win.shape[2], win.shape[3]
        flat = win.reshape(n, c, ho, wo, w * w)
    idx = flat.argmax(axis=-1)  # ties resolve to the first (lowest) position
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _pool_backward(dout, idx, x_shape, spec: MaxPool2D):
    n, c, ho, wo = dout.shape
    s = spec.effective_stride
    rows = idx // spec.window
    cols = idx % spec.window
    h_abs = np.arange(ho)[None, None, :, None] * s + rows
    w_abs = np.arange(wo)[None, None, None, :] * s + cols
    n_g = np.arange(n)[:, None, None, None]
    c_g = np.arange(c)[None, :, None, None]
    dx = np.zeros(x_shape)
    np.add.at(dx, (n_g, c_g, h_abs, w_abs), dout)
    return dx


def _activation_forward(x, spec: Activation, layer_idx: int):
    if spec.fn == "relu":
        return np.maximum(x, 0.0)
    if spec.fn == "tanh":
        return np.tanh(x)
    raise ShapeMismatchError(f"layer {layer_idx} (Activation) unknown fn {spec.fn!r}")


def _activation_backward(dout, spec: Activation, x, y):
    if spec.fn == "relu":
        return dout * (x > 0.0)
    return dout * (1.0 - y * y)  # tanh, via cached output


def _record_points(layers) -> dict[int, int]:
    """Map layer index -> conv ordinal whose post-activation map it produces.

    A conv's recorded map is the output of the Activation layer directly after
    it, else the conv output itself.
    """
    points: dict[int, int] = {}
    ordinal = 0
    for i, spec in enumerate(layers):
        if isinstance(spec, Conv2D):
            if i + 1 < len(layers) and isinstance(layers[i + 1], Activation):
                points[i + 1] = ordinal
            else:
                points[i] = ordinal
            ordinal += 1
    return points


def _forward_cached(net: Network, batch: np.ndarray):
    """Forward pass keeping per-layer caches for the backward pass."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 4 or x.shape[1:] != net.input_shape:
        raise ShapeMismatchError(
            f"layer 0 input: batch shape {x.shape} does not match (N,)+{net.input_shape}"
        )
    points = _record_points(net.layers)
    conv_acts: list[np.ndarray] = [None] * len(points)
    caches: list[dict] = []
    for i, spec in enumerate(net.layers):
        cache: dict = {"input_shape": x.shape}
        if isinstance(spec, Conv2D):
            cache["x_shape"] = x.shape
            x, cols = _conv_forward(x, spec, net.weights[i], net.biases[i], i)
            cache["cols"] = cols
        elif isinstance(spec, MaxPool2D):
            cache["x_shape"] = x.shape
            x, idx = _pool_forward(x, spec, i)
            cache["idx"] = idx
        elif isinstance(spec, Activation):
            cache["x"] = x
            x = _activation_forward(x, spec, i)
            cache["y"] = x
        elif isinstance(spec, Flatten):
            cache["x_shape"] = x.shape
            x = x.reshape(x.shape[0], -1)
        elif isinstance(spec, Dense):
            if x.ndim != 2 or x.shape[1] != spec.in_features:
                raise ShapeMismatchError(
                    f"layer {i} (Dense) expects (N,{spec.in_features}), got {x.shape}"
                )
            cache["x"] = x
            x = x @ net.weights[i].T + net.biases[i]
        elif isinstance(spec, SoftmaxCrossEntropy):
            pass  # identity at inference; loss handled separately
        caches.append(cache)
        if i in points:
            conv_acts[points[i]] = x
    if not np.isfinite(x).all():
        bad = int(np.argwhere(~np.isfinite(x).all(axis=tuple(range(1, x.ndim))))[0, 0])
        raise NumericError(f"non-finite logits at sample {bad}")
    return x, conv_acts, caches


def forward(net: Network, batch: np.ndarray):
    """Run the network on a batch.

    Returns (logits, per_conv_activations) where the activation list holds one
    post-activation feature map (N, Cout, H, W) per conv layer.
    """
    logits, conv_acts, _ = _forward_cached(net, batch)
    return logits, conv_acts


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample cross-entropy over softmax(logits), in nats."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ShapeMismatchError(
            f"labels must lie in [0, {logits.shape[1]}), got range [{labels.min()}, {labels.max()}]"
        )
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    loss = lse - logits[np.arange(logits.shape[0]), labels]
    if not np.isfinite(loss).all():
        bad = int(np.argwhere(~np.isfinite(loss))[0, 0])
        raise NumericError(f"non-finite loss at sample {bad}")
    return loss


def loss_and_grads(net: Network, batch: np.ndarray, labels: np.ndarray):
    """Per-sample loss plus parameter and conv-activation gradients.

    Returns (per_sample_loss, param_grads, activation_grads):
      * per_sample_loss: (N,) unreduced cross-entropy in nats;
      * param_grads: per layer, (dW, db) of the MEAN loss (None for
        parameterless layers) -- what sgd_step consumes;
      * activation_grads: per conv layer, gradient of the SUMMED loss w.r.t.
        the post-activation feature map, so each sample's slice depends only
        on its own loss (batch-size independent, as the Taylor score needs).
    """
    logits, _, caches = _forward_cached(net, batch)
    labels = np.asarray(labels)
    per_sample_loss = softmax_cross_entropy(logits, labels)
    n = logits.shape[0]

    p = np.exp(logits - logits.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    grad = p.copy()
    grad[np.arange(n), labels] -= 1.0  # d(sum loss)/d logits

    points = _record_points(net.layers)
    param_grads: list[tuple[np.ndarray, np.ndarray] | None] = [None] * len(net.layers)
    activation_grads: list[np.ndarray] = [None] * len(points)

    for i in range(len(net.layers) - 1, -1, -1):
        spec = net.layers[i]
        cache = caches[i]
        if i in points:
            activation_grads[points[i]] = grad.copy()
        if isinstance(spec, SoftmaxCrossEntropy):
            continue
        if isinstance(spec, Dense):
            dw = grad.T @ cache["x"]
            db = grad.sum(axis=0)
            param_grads[i] = (dw / n, db / n)
            grad = grad @ net.weights[i]
        elif isinstance(spec, Flatten):
            grad = grad.reshape(cache["x_shape"])
        elif isinstance(spec, Activation):
            grad = _activation_backward(grad, spec, cache["x"], cache["y"])
        elif isinstance(spec, MaxPool2D):
            grad = _pool_backward(grad, cache["idx"], cache["x_shape"], spec)
        elif isinstance(spec, Conv2D):
            grad, dw, db = _conv_backward(grad, cache["cols"], cache["x_shape"], spec, net.weights[i])
            param_grads[i] = (dw / n, db / n)
    return per_sample_loss, param_grads, activation_grads


# --------------------------------------------------------------------------
# SGD
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def sgd_step(net: Network, param_grads, cfg: SgdConfig, velocity=None):
    """One SGD update with momentum and weight decay, honoring freeze sets.

    velocity carries the momentum buffers between calls (None = start from
    rest). Returns (new_network, new_velocity). Frozen filters' weight rows
    and bias entries are bit-identical before and after.
    """
    if velocity is None:
        velocity = [
            None if g is None else (np.zeros_like(g[0]), np.zeros_like(g[1]))
            for g in param_grads
        ]
    conv_ordinal = {idx: k for k, idx in enumerate(net.conv_layer_indices)}
    new_w, new_b, new_v = [], [], []
    for i, g in enumerate(param_grads):
        w, b = net.weights[i], net.biases[i]
        if g is None:
            new_w.append(None if w is None else w.copy())
            new_b.append(None if b is None else b.copy())
            new_v.append(None)
            continue
        dw, db = g
        if dw.shape != w.shape or db.shape != b.shape:
            raise ShapeMismatchError(f"layer {i} gradient shape mismatch")
        vw, vb = velocity[i]
        gw = dw + cfg.weight_decay * w
        gb = db + cfg.weight_decay * b
        vw = cfg.momentum * vw + gw
        vb = cfg.momentum * vb + gb
        w2 = w - cfg.learning_rate * vw
        b2 = b - cfg.learning_rate * vb
        frozen = net.freeze.get(conv_ordinal.get(i, -1))
        if frozen:
            rows = sorted(frozen)
            w2[rows] = w[rows]
            b2[rows] = b[rows]
            vw = vw.copy()
            vb = vb.copy()
            vw[rows] = 0.0
            vb[rows] = 0.0
        new_w.append(w2)
        new_b.append(b2)
        new_v.append((vw, vb))
    out = Network(net.layers, net.input_shape, new_w, new_b, dict(net.freeze))
    return out, new_v


# --------------------------------------------------------------------------
# Cost accounting
# --------------------------------------------------------------------------

def count_flops(net: Network) -> int:
    """Forward-pass FLOPs: 2*k*k*Cin*Cout*Hout*Wout per conv, 2*in*out per
    dense; multiply-add counts as 2, pooling/activation/softmax and biases
    count 0."""
    shapes = layer_output_shapes(net)
    total = 0
    for i, spec in enumerate(net.layers):
        if isinstance(spec, Conv2D):
            _, ho, wo = shapes[i]
            total += 2 * spec.kernel * spec.kernel * spec.in_channels * spec.out_channels * ho * wo
        elif isinstance(spec, Dense):
            total += 2 * spec.in_features * spec.out_features
    return total


def param_bytes(net: Network) -> int:
    """Conv filter data volume at 4 bytes per parameter (weights + biases)."""
    total = 0
    for i, spec in enumerate(net.layers):
        if isinstance(spec, Conv2D):
            total += (net.weights[i].size + net.biases[i].size) * 4
    return total


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

def _batch_slices(n: int, batch_size: int):
    return [slice(s, min(s + batch_size, n)) for s in range(0, n, batch_size)]


def evaluate(net: Network, dataset, batch_size: int = 256, workers: int = 1) -> float:
    """Classification accuracy on a dataset; argmax ties break to the lowest
    class index. Batches may be sharded across threads; per-sample results
    merge in sample order, so the result is worker-count independent."""
    images, labels = dataset.images, dataset.labels
    slices = _batch_slices(images.shape[0], batch_size)

    def run(sl):
        logits, _ = forward(net, images[sl])
        return np.argmax(logits, axis=1) == labels[sl]

    if workers > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, slices))
    else:
        parts = [run(sl) for sl in slices]
    correct = np.concatenate(parts)
    return float(correct.sum()) / len(correct)


# --------------------------------------------------------------------------
# Checkpoint I/O
# --------------------------------------------------------------------------

_MAGIC = b"2PFP"
_VERSION = 1


def _tensor_entries(net: Network):
    for i in range(len(net.layers)):
        if net.weights[i] is not None:
            yield i, "weight", net.weights[i]
            yield i, "bias", net.biases[i]


def serialize_network(net: Network) -> bytes:
    """Bit-exact binary form: magic, u32 version, u32 header length, JSON
    header, then little-endian f64 tensor payloads in header order."""
    header = {
        "input_shape": list(net.input_shape),
        "layers": [spec_to_dict(s) for s in net.layers],
        "freeze": {str(k): sorted(v) for k, v in net.freeze.items()},
        "tensors": [
            {"layer": i, "param": name, "shape": list(arr.shape)}
            for i, name, arr in _tensor_entries(net)
        ],
    }
    hjson = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, _, arr in _tensor_entries(net)
    )
    return _MAGIC + struct.pack("<I", _VERSION) + struct.pack("<I", len(hjson)) + hjson + blob


def deserialize_network(data: bytes) -> Network:
    if len(data) < 12:
        raise TruncatedCheckpointError(f"checkpoint holds {len(data)} bytes, prelude needs 12")
    if data[:4] != _MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {_MAGIC!r}")
    (version,) = struct.unpack("<I", data[4:8])
    if version != _VERSION:
        raise BadVersionError(f"unsupported checkpoint version {version}")
    (hlen,) = struct.unpack("<I", data[8:12])
    if len(data) < 12 + hlen:
        raise TruncatedCheckpointError("checkpoint ends inside the declared header")
    try:
        header = json.loads(data[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unparseable header: {e}") from e

    layers = tuple(spec_from_dict(d) for d in header["layers"])
    entries = header["tensors"]
    expected = sum(int(np.prod(e["shape"])) * 8 for e in entries)
    blob = data[12 + hlen :]
    if len(blob) < expected:
        raise TruncatedCheckpointError(
            f"tensor payload holds {len(blob)} bytes, header declares {expected}"
        )
    if len(blob) != expected:
        raise LengthMismatchError(
            f"length mismatch: payload {len(blob)} bytes vs header-declared {expected}"
        )

    weights: list[np.ndarray | None] = [None] * len(layers)
    biases: list[np.ndarray | None] = [None] * len(layers)
    off = 0
    for e in entries:
        shape = tuple(int(s) for s in e["shape"])
        size = int(np.prod(shape)) * 8
        arr = np.frombuffer(blob[off : off + size], dtype="<f8").reshape(shape).astype(np.float64)
        off += size
        if e["param"] == "weight":
            weights[e["layer"]] = arr
        else:
            biases[e["layer"]] = arr
    freeze = {int(k): frozenset(v) for k, v in header.get("freeze", {}).items()}
    net = Network(layers, tuple(header["input_shape"]), weights, biases, freeze)
    validate_network(net)
    return net


def save_checkpoint(net: Network, path) -> None:
    with open(path, "wb") as f:
        f.write(serialize_network(net))


def load_checkpoint(path) -> Network:
    with open(path, "rb") as f:
        return deserialize_network(f.read())
