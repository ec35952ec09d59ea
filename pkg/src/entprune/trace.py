"""Per-sample (loss, per-filter activation) traces and their JSONL format.

A trace holds one record per dataset sample: the unreduced cross-entropy loss
and, for every conv layer, one scalar per filter obtained by spatially
reducing the post-activation feature map (mean by default, max available for
sensitivity studies). The on-disk format is line-delimited JSON with a header
line; floats survive the round trip bit-exactly because they are written in
shortest round-trip decimal form.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .entstats import EntropyAccumulator, QuantSpec

__all__ = [
    "TraceRecord",
    "TraceFile",
    "TraceFormatError",
    "capture",
    "write_trace",
    "read_trace",
    "trace_restrict",
    "accumulators_from_trace",
]

_REDUCTIONS = ("mean", "max")


class TraceFormatError(Exception):
    pass


@dataclass
class TraceRecord:
    sample_id: int
    loss: float  # unreduced cross-entropy, nats
    activations: list[list[float]]  # per conv layer, per-filter scalar


@dataclass
class TraceFile:
    model_hash: str
    layer_sizes: list[int]  # out_channels per conv layer
    dataset: str
    reduction: str
    records: list[TraceRecord] = field(default_factory=list)

    def validate(self) -> None:
        for rec in self.records:
            if len(rec.activations) != len(self.layer_sizes):
                raise TraceFormatError(
                    f"record {rec.sample_id}: {len(rec.activations)} layers, header declares {len(self.layer_sizes)}"
                )
            for li, vec in enumerate(rec.activations):
                if len(vec) != self.layer_sizes[li]:
                    raise TraceFormatError(
                        f"record {rec.sample_id}: layer {li} holds {len(vec)} values, header declares {self.layer_sizes[li]}"
                    )
            if rec.loss < 0:
                raise TraceFormatError(f"record {rec.sample_id}: negative loss")


def _reduce_maps(conv_acts, reduction: str) -> list[np.ndarray]:
    if reduction == "mean":
        return [a.mean(axis=(2, 3)) for a in conv_acts]
    return [a.max(axis=(2, 3)) for a in conv_acts]


def capture(
    net: engine.Network,
    dataset,
    reduction: str = "mean",
    batch_size: int = 256,
    workers: int = 1,
) -> TraceFile:
    """One record per sample, in sample order, deterministic and independent
    of batch size. Batches may run on worker threads; records merge sorted by
    sample id."""
    if reduction not in _REDUCTIONS:
        raise TraceFormatError(f"unknown reduction {reduction!r}")
    images, labels = dataset.images, dataset.labels
    slices = engine._batch_slices(images.shape[0], batch_size)

    def run(sl):
        logits, conv_acts = engine.forward(net, images[sl])
        losses = engine.softmax_cross_entropy(logits, labels[sl])
        scalars = _reduce_maps(conv_acts, reduction)
        return sl.start, losses, scalars

    if workers > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, slices))
    else:
        parts = [run(sl) for sl in slices]

    records: list[TraceRecord] = []
    for start, losses, scalars in sorted(parts, key=lambda p: p[0]):
        for k in range(len(losses)):
            records.append(
                TraceRecord(
                    sample_id=start + k,
                    loss=float(losses[k]),
                    activations=[[float(v) for v in layer[k]] for layer in scalars],
                )
            )
    tf = TraceFile(
        model_hash=hashlib.sha256(engine.serialize_network(net)).hexdigest(),
        layer_sizes=net.filter_counts(),
        dataset=dataset.name,
        reduction=reduction,
        records=records,
    )
    tf.validate()
    return tf


def write_trace(tf: TraceFile, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        header = {
            "model_hash": tf.model_hash,
            "layer_sizes": tf.layer_sizes,
            "dataset": tf.dataset,
            "reduction": tf.reduction,
        }
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in tf.records:
            f.write(
                json.dumps(
                    {"sample_id": rec.sample_id, "loss": rec.loss, "activations": rec.activations}
                )
                + "\n"
            )


def read_trace(path) -> TraceFile:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise TraceFormatError(f"{path}: empty trace file")
    try:
        header = json.loads(lines[0])
        records = [json.loads(line) for line in lines[1:] if line.strip()]
    except json.JSONDecodeError as e:
        raise TraceFormatError(f"{path}: unparseable line: {e}") from e
    missing = {"model_hash", "layer_sizes", "dataset", "reduction"} - header.keys()
    if missing:
        raise TraceFormatError(f"{path}: header missing {sorted(missing)}")
    tf = TraceFile(
        model_hash=header["model_hash"],
        layer_sizes=list(header["layer_sizes"]),
        dataset=header["dataset"],
        reduction=header["reduction"],
        records=[
            TraceRecord(r["sample_id"], r["loss"], r["activations"]) for r in records
        ],
    )
    tf.validate()
    return tf


def trace_restrict(tf: TraceFile, removed: dict[int, list[int]]) -> TraceFile:
    """Drop per-filter entries for removed filters (per conv ordinal).

    The surviving entries of a pruned layer are exact for the pruned network,
    because removing output channels does not change the remaining channels of
    that same layer. Downstream layers' entries are stale; callers must only
    consume restricted layers.
    """
    keep: list[list[int]] = []
    for li, size in enumerate(tf.layer_sizes):
        gone = set(removed.get(li, ()))
        bad = [g for g in gone if g < 0 or g >= size]
        if bad:
            raise TraceFormatError(f"layer {li}: removal indices {bad} out of range {size}")
        keep.append([f for f in range(size) if f not in gone])
    out = TraceFile(
        model_hash=tf.model_hash + "#restricted",
        layer_sizes=[len(k) for k in keep],
        dataset=tf.dataset,
        reduction=tf.reduction,
        records=[
            TraceRecord(
                rec.sample_id,
                rec.loss,
                [[vec[f] for f in keep[li]] for li, vec in enumerate(rec.activations)],
            )
            for rec in tf.records
        ],
    )
    out.validate()
    return out


def accumulators_from_trace(
    tf: TraceFile, quant: QuantSpec | None = None
) -> list[list[EntropyAccumulator]]:
    """Quantize every (activation, loss) pair into per-filter accumulators."""
    quant = quant if quant is not None else QuantSpec()
    accs = [[EntropyAccumulator(quant) for _ in range(size)] for size in tf.layer_sizes]
    for rec in tf.records:
        for li, vec in enumerate(rec.activations):
            for fi, a in enumerate(vec):
                accs[li][fi].add_raw(a, rec.loss)
    return accs
