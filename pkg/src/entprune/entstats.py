"""Quantized histogram accumulation and entropy scores for filter traces.

Scalars (per-filter activation summaries and per-sample losses) are mapped to
signed 32-bit integer bins via floor(eps_h * x). Per filter we keep c_val
(activation-bin counts), c_bins (joint activation-bin x loss-bin counts) and
c_total, and derive from them:

  * activation entropy -- entropy of the activation-bin distribution with the
    zero bin excluded from the sum (it carries no information for the next
    layer) while c_total still counts it;
  * conditional entropy -- H(loss bin | activation bin), zero bin included,
    as the accumulated per-bin contributions ent_i;
  * loss entropy and mutual information = H(loss) - H(loss | activation).

All entropies are in bits. Sums go through math.fsum, so results are exactly
independent of accumulation order, merge order, and bin relabeling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "QuantSpec",
    "EntropyAccumulator",
    "EntstatsError",
    "EmptyAccumulatorError",
    "ConditionalEntropyResult",
    "quantize",
    "accumulate",
    "merge",
    "activation_entropy",
    "conditional_entropy",
    "loss_entropy",
    "mutual_information",
]

_I32_MIN = -(2**31)
_I32_MAX = 2**31 - 1


class EntstatsError(Exception):
    pass


class EmptyAccumulatorError(EntstatsError):
    pass


@dataclass(frozen=True)
class QuantSpec:
    """Scale factor for floor quantization into signed 32-bit bins."""

    eps_h: float = 1e4

    def __post_init__(self):
        if self.eps_h <= 0:
            raise ValueError("eps_h must be > 0")


def quantize(x: float, q: QuantSpec) -> int:
    """bin = floor(eps_h * x), saturated to the int32 range.

    floor keeps negative activations (tanh networks) on their own side of
    zero. Callers that care about saturation use EntropyAccumulator.add_raw,
    which counts saturated events.
    """
    if not math.isfinite(x):
        raise EntstatsError(f"cannot quantize non-finite value {x!r}")
    b = math.floor(q.eps_h * x)
    if b < _I32_MIN:
        return _I32_MIN
    if b > _I32_MAX:
        return _I32_MAX
    return b


def _saturates(x: float, q: QuantSpec) -> bool:
    b = math.floor(q.eps_h * x)
    return b < _I32_MIN or b > _I32_MAX


class EntropyAccumulator:
    """Per-filter quantized histograms: c_val, c_bins, c_total.

    Mergeable value object; merge is commutative and associative, and
    accumulation order never affects derived entropies.
    """

    __slots__ = ("quant", "c_val", "c_bins", "c_total", "n_saturated")

    def __init__(self, quant: QuantSpec | None = None):
        self.quant = quant if quant is not None else QuantSpec()
        self.c_val: dict[int, int] = {}
        self.c_bins: dict[int, dict[int, int]] = {}
        self.c_total: int = 0
        self.n_saturated: int = 0

    def add(self, i: int, j: int, count: int = 1) -> None:
        """Record `count` events with activation bin i and loss bin j."""
        if count < 0:
            raise EntstatsError("counts must be non-negative")
        self.c_val[i] = self.c_val.get(i, 0) + count
        row = self.c_bins.setdefault(i, {})
        row[j] = row.get(j, 0) + count
        self.c_total += count

    def add_raw(self, activation: float, loss: float) -> None:
        """Quantize an (activation, loss) pair and record it; saturated bins
        are still recorded but bump the warning counter."""
        if _saturates(activation, self.quant) or _saturates(loss, self.quant):
            self.n_saturated += 1
        self.add(quantize(activation, self.quant), quantize(loss, self.quant))

    def validate(self) -> None:
        if self.c_total != sum(self.c_val.values()):
            raise EntstatsError("c_total inconsistent with c_val")
        for i, row in self.c_bins.items():
            if sum(row.values()) != self.c_val.get(i, 0):
                raise EntstatsError(f"c_bins row {i} inconsistent with c_val")
        if any(c < 0 for c in self.c_val.values()):
            raise EntstatsError("negative count")

    def copy(self) -> "EntropyAccumulator":
        out = EntropyAccumulator(self.quant)
        out.c_val = dict(self.c_val)
        out.c_bins = {i: dict(row) for i, row in self.c_bins.items()}
        out.c_total = self.c_total
        out.n_saturated = self.n_saturated
        return out


def accumulate(acc: EntropyAccumulator, i: int, j: int) -> EntropyAccumulator:
    """Record one event in place and return the accumulator."""
    acc.add(i, j)
    return acc


def merge(a: EntropyAccumulator, b: EntropyAccumulator) -> EntropyAccumulator:
    """Combine two accumulators by adding counts."""
    if a.quant != b.quant:
        raise EntstatsError("cannot merge accumulators with different quantization")
    out = a.copy()
    for i, c in b.c_val.items():
        out.c_val[i] = out.c_val.get(i, 0) + c
    for i, row in b.c_bins.items():
        orow = out.c_bins.setdefault(i, {})
        for j, c in row.items():
            orow[j] = orow.get(j, 0) + c
    out.c_total += b.c_total
    out.n_saturated += b.n_saturated
    return out


def activation_entropy(acc: EntropyAccumulator) -> float:
    """Entropy (bits) of the activation-bin distribution, zero bin excluded
    from the sum while c_total keeps counting it."""
    if acc.c_total == 0:
        raise EmptyAccumulatorError("activation_entropy of an empty accumulator")
    t = acc.c_total
    return math.fsum(
        -(c / t) * math.log2(c / t) for i, c in acc.c_val.items() if i != 0 and c > 0
    )


@dataclass(frozen=True)
class ConditionalEntropyResult:
    con_ent: float  # bits
    ent: dict[int, float]  # per-activation-bin contribution ent_i
    argmax_bin: int  # activation bin of the largest ent_i (ties: lowest bin)
    argmax_activation: float  # dequantized bin value, argmax_bin / eps_h


def conditional_entropy(
    acc: EntropyAccumulator, include_zero_bin: bool = True
) -> ConditionalEntropyResult:
    """H(loss bin | activation bin) in bits, plus the per-bin ent_i table.

    ent_i = (c_val[i]/c_total) * sum_j -(c_bins[i][j]/c_val[i]) * log2(...),
    con_ent = sum_i ent_i. The zero activation bin participates by default;
    include_zero_bin=False is an ablation switch, not the reference behavior.
    """
    if acc.c_total == 0:
        raise EmptyAccumulatorError("conditional_entropy of an empty accumulator")
    t = acc.c_total
    ent: dict[int, float] = {}
    for i, ci in acc.c_val.items():
        if not include_zero_bin and i == 0:
            continue
        if ci == 0:
            continue
        row = acc.c_bins.get(i, {})
        inner = math.fsum(
            -(c / ci) * math.log2(c / ci) for c in row.values() if c > 0
        )
        ent[i] = (ci / t) * inner
    if not ent:
        raise EmptyAccumulatorError("no activation bins to condition on")
    best = min(ent, key=lambda i: (-ent[i], i))
    return ConditionalEntropyResult(
        con_ent=math.fsum(ent.values()),
        ent=ent,
        argmax_bin=best,
        argmax_activation=best / acc.quant.eps_h,
    )


def loss_entropy(acc: EntropyAccumulator) -> float:
    """Entropy (bits) of the loss-bin marginal sum_i c_bins[i][j]."""
    if acc.c_total == 0:
        raise EmptyAccumulatorError("loss_entropy of an empty accumulator")
    marginal: dict[int, int] = {}
    for row in acc.c_bins.values():
        for j, c in row.items():
            marginal[j] = marginal.get(j, 0) + c
    t = acc.c_total
    return math.fsum(-(c / t) * math.log2(c / t) for c in marginal.values() if c > 0)


def mutual_information(acc: EntropyAccumulator) -> float:
    """I(activation; loss) = H(loss) - H(loss | activation), in bits."""
    return loss_entropy(acc) - conditional_entropy(acc).con_ent
