"""Structural network modification: filter removal, bias compensation,
max-entropy freeze marking.

Removing a conv filter drops its output channel and the matching input
channels (or flattened columns) of the consumer layer. Bias compensation
folds the removed filter's modal activation -- the dequantized activation at
the bin with the largest conditional-entropy contribution -- into the
consumer's bias, so a filter that emitted a constant keeps contributing that
constant. Compensation must run before removal, while the consumer still has
the original weights.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import engine
from .entstats import QuantSpec, activation_entropy
from .trace import TraceFile, accumulators_from_trace

__all__ = [
    "SurgeryError",
    "UnsupportedTopologyError",
    "remove_filters",
    "bias_compensate",
    "mark_freeze",
]


class SurgeryError(Exception):
    pass


class UnsupportedTopologyError(SurgeryError):
    pass


def _consumer(net: engine.Network, layer_idx: int):
    """Find the layer consuming conv `layer_idx`'s channels.

    Returns ("conv", idx, None) or ("dense", idx, block) where block is the
    per-channel column count (H*W at the flatten point). Channel identity
    passes through activation and pooling unchanged.
    """
    shapes = engine.layer_output_shapes(net)
    j = layer_idx + 1
    saw_flatten = False
    while j < len(net.layers):
        spec = net.layers[j]
        if isinstance(spec, (engine.Activation, engine.MaxPool2D)):
            j += 1
            continue
        if isinstance(spec, engine.Flatten):
            saw_flatten = True
            j += 1
            continue
        if isinstance(spec, engine.Conv2D):
            if saw_flatten:
                raise UnsupportedTopologyError(f"conv layer {j} after flatten is unsupported")
            return "conv", j, None
        if isinstance(spec, engine.Dense):
            if not saw_flatten:
                raise UnsupportedTopologyError(f"dense layer {j} without flatten is unsupported")
            c, h, w = _pre_flatten_shape(net, shapes, j)
            return "dense", j, h * w
        raise UnsupportedTopologyError(
            f"cannot prune conv layer {layer_idx}: consumer is {type(spec).__name__} at layer {j}"
        )
    raise UnsupportedTopologyError(f"conv layer {layer_idx} has no consumer layer")


def _pre_flatten_shape(net, shapes, dense_idx):
    for k in range(dense_idx - 1, -1, -1):
        if isinstance(net.layers[k], engine.Flatten):
            return shapes[k - 1] if k > 0 else net.input_shape
    raise UnsupportedTopologyError("dense consumer without a flatten producer")


def _dense_columns(channel: int, block: int) -> np.ndarray:
    return np.arange(channel * block, (channel + 1) * block)


def remove_filters(net: engine.Network, plan) -> engine.Network:
    """Remove the planned output channels and reconcile each consumer.

    Freeze sets are reindexed to the surviving filters; frozen filters that
    were themselves removed drop out of the set.
    """
    plan.validate()
    conv_indices = net.conv_layer_indices
    for li in plan.removed:
        if li < 0 or li >= len(conv_indices):
            raise SurgeryError(f"plan names conv ordinal {li}, network has {len(conv_indices)}")

    out = net.copy()
    layers = list(out.layers)
    for ordinal, gone in sorted(plan.removed.items()):
        if not gone:
            continue
        idx = conv_indices[ordinal]
        spec: engine.Conv2D = layers[idx]
        bad = [g for g in gone if g < 0 or g >= spec.out_channels]
        if bad:
            raise SurgeryError(f"conv ordinal {ordinal}: filter indices {bad} out of range")
        if len(gone) >= spec.out_channels:
            raise SurgeryError(f"conv ordinal {ordinal}: cannot remove all filters")
        keep = [f for f in range(spec.out_channels) if f not in set(gone)]

        kind, cidx, block = _consumer(net, idx)
        out.weights[idx] = out.weights[idx][keep]
        out.biases[idx] = out.biases[idx][keep]
        layers[idx] = dataclasses.replace(spec, out_channels=len(keep))

        if kind == "conv":
            cspec: engine.Conv2D = layers[cidx]
            out.weights[cidx] = out.weights[cidx][:, keep]
            layers[cidx] = dataclasses.replace(cspec, in_channels=len(keep))
        else:
            cspec: engine.Dense = layers[cidx]
            cols = np.concatenate([_dense_columns(f, block) for f in keep])
            out.weights[cidx] = out.weights[cidx][:, cols]
            layers[cidx] = dataclasses.replace(cspec, in_features=len(cols))

        if ordinal in out.freeze:
            rank = {old: new for new, old in enumerate(keep)}
            out.freeze[ordinal] = frozenset(rank[f] for f in out.freeze[ordinal] if f in rank)

    out.layers = tuple(layers)
    engine.validate_network(out)
    return out


def bias_compensate(net: engine.Network, removed) -> engine.Network:
    """Fold modal activations of soon-to-be-removed filters into consumers.

    `removed` is one (conv_ordinal, filter, a_star) triple or a list of them;
    a_star is the dequantized activation at the filter's maximum ent_i bin.
    For a conv consumer each output unit k gains a_star * sum_spatial W[k, f];
    for a dense consumer, a_star * sum over the filter's flattened columns.
    Compensations for multiple filters add linearly. Must be applied before
    the channels are removed.
    """
    if removed and isinstance(removed[0], (int, np.integer)):
        removed = [removed]
    out = net.copy()
    conv_indices = net.conv_layer_indices
    for ordinal, fi, a_star in removed:
        if a_star is None:
            raise SurgeryError(f"conv ordinal {ordinal} filter {fi}: missing a_star")
        idx = conv_indices[ordinal]
        spec: engine.Conv2D = net.layers[idx]
        if fi < 0 or fi >= spec.out_channels:
            raise SurgeryError(f"conv ordinal {ordinal}: filter {fi} out of range")
        kind, cidx, block = _consumer(net, idx)
        if kind == "conv":
            out.biases[cidx] = out.biases[cidx] + a_star * out.weights[cidx][:, fi].sum(axis=(1, 2))
        else:
            cols = _dense_columns(fi, block)
            out.biases[cidx] = out.biases[cidx] + a_star * out.weights[cidx][:, cols].sum(axis=1)
    return out


def mark_freeze(
    net: engine.Network,
    tf: TraceFile,
    layers: list[int] | None = None,
    quant: QuantSpec | None = None,
) -> engine.Network:
    """Freeze the maximum-activation-entropy filter of each target layer.

    The trace must describe `net` (layer sizes must match). `layers` limits
    marking to those conv ordinals (the just-pruned layers in the two-phase
    procedure); None marks every traced layer. Ties break to the lowest
    filter index.
    """
    if tf.layer_sizes != net.filter_counts():
        raise SurgeryError(
            f"trace layer sizes {tf.layer_sizes} do not match network {net.filter_counts()}"
        )
    targets = range(len(tf.layer_sizes)) if layers is None else layers
    accs = accumulators_from_trace(tf, quant)
    out = net.copy()
    for li in targets:
        if li < 0 or li >= len(accs) or not accs[li]:
            raise SurgeryError(f"conv ordinal {li} not present in trace")
        ents = [activation_entropy(a) for a in accs[li]]
        best = int(np.argmax(ents))  # first occurrence: ties go to the lowest index
        out.freeze[li] = out.freeze.get(li, frozenset()) | {best}
    return out
