"""Filter-importance criteria and prune-plan construction.

Five criteria are supported. Each has a fixed prune direction: conditional
entropy, activation entropy, L1 norm and the Taylor score prune the lowest
values first (ascending), APoZ prunes the highest zero fraction first
(descending). The direction table can be overridden per call for ablations,
but the defaults are the reference behavior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import engine
from .entstats import QuantSpec, activation_entropy, conditional_entropy
from .trace import TraceFile, accumulators_from_trace

__all__ = [
    "FilterScore",
    "PrunePlan",
    "CriteriaError",
    "PRUNE_DIRECTION",
    "score_cond_ent",
    "score_act_ent",
    "score_l1",
    "score_apoz",
    "score_taylor",
    "rank_and_select",
]

PRUNE_DIRECTION = {
    "cond_ent": "asc",
    "act_ent": "asc",
    "l1": "asc",
    "apoz": "desc",
    "taylor": "asc",
}


class CriteriaError(Exception):
    pass


@dataclass(frozen=True)
class FilterScore:
    layer: int  # conv ordinal
    filter: int
    criterion: str
    score: float
    prune_rank: int  # 0 = first to prune under the criterion's direction


@dataclass
class PrunePlan:
    """Per-layer keep masks (1 = keep) plus explicit removed-index lists."""

    criterion: str
    scope: str
    amount: float | int
    keep: dict[int, list[int]]  # conv ordinal -> 0/1 vector over filters
    removed: dict[int, list[int]]  # conv ordinal -> sorted removed indices
    a_star: dict[tuple[int, int], float] | None = None  # bias-compensation activations

    def n_removed(self) -> int:
        return sum(len(v) for v in self.removed.values())

    def validate(self) -> None:
        for li, mask in self.keep.items():
            rem = set(self.removed.get(li, ()))
            if sorted(rem) != [f for f, k in enumerate(mask) if k == 0]:
                raise CriteriaError(f"layer {li}: keep mask and removed list disagree")
            if rem and len(rem) >= len(mask):
                raise CriteriaError(f"layer {li}: plan would remove all {len(mask)} filters")

    def to_json_dict(self) -> dict:
        d = {
            "criterion": self.criterion,
            "scope": self.scope,
            "amount": self.amount,
            "keep": {str(k): v for k, v in self.keep.items()},
            "removed": {str(k): v for k, v in self.removed.items()},
        }
        if self.a_star is not None:
            d["a_star"] = {f"{li}:{fi}": v for (li, fi), v in self.a_star.items()}
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "PrunePlan":
        a_star = None
        if "a_star" in d and d["a_star"] is not None:
            a_star = {}
            for key, v in d["a_star"].items():
                li, fi = key.split(":")
                a_star[(int(li), int(fi))] = float(v)
        plan = cls(
            criterion=d["criterion"],
            scope=d["scope"],
            amount=d["amount"],
            keep={int(k): list(v) for k, v in d["keep"].items()},
            removed={int(k): sorted(v) for k, v in d["removed"].items()},
            a_star=a_star,
        )
        plan.validate()
        return plan

    @classmethod
    def from_removals(
        cls,
        removed: dict[int, list[int]],
        layer_sizes: list[int],
        criterion: str,
        scope: str,
        amount,
        a_star=None,
    ) -> "PrunePlan":
        keep = {}
        clean = {}
        for li, size in enumerate(layer_sizes):
            gone = sorted(set(removed.get(li, ())))
            keep[li] = [0 if f in gone else 1 for f in range(size)]
            clean[li] = gone
        plan = cls(criterion, scope, amount, keep, clean, a_star)
        plan.validate()
        return plan


def _ranked(entries: list[tuple[int, int, float]], criterion: str) -> list[FilterScore]:
    """Attach prune ranks: 0 is pruned first; ties break on (layer, filter)."""
    for _, _, v in entries:
        if not math.isfinite(v):
            raise CriteriaError(f"{criterion}: non-finite score")
    sign = 1.0 if PRUNE_DIRECTION[criterion] == "asc" else -1.0
    order = sorted(range(len(entries)), key=lambda k: (sign * entries[k][2], entries[k][0], entries[k][1]))
    ranks = {k: r for r, k in enumerate(order)}
    return [
        FilterScore(layer=li, filter=fi, criterion=criterion, score=v, prune_rank=ranks[k])
        for k, (li, fi, v) in enumerate(entries)
    ]


def score_cond_ent(trace: TraceFile, quant: QuantSpec | None = None) -> list[FilterScore]:
    """Conditional entropy H(loss bin | activation bin) per filter; lowest
    values are pruned first."""
    accs = accumulators_from_trace(trace, quant)
    entries = [
        (li, fi, conditional_entropy(accs[li][fi]).con_ent)
        for li in range(len(accs))
        for fi in range(len(accs[li]))
    ]
    return _ranked(entries, "cond_ent")


def score_act_ent(trace: TraceFile, quant: QuantSpec | None = None) -> list[FilterScore]:
    """Activation entropy per filter (zero bin excluded); lowest first."""
    accs = accumulators_from_trace(trace, quant)
    entries = [
        (li, fi, activation_entropy(accs[li][fi]))
        for li in range(len(accs))
        for fi in range(len(accs[li]))
    ]
    return _ranked(entries, "act_ent")


def score_l1(net: engine.Network) -> list[FilterScore]:
    """Sum of absolute kernel weights per filter, bias excluded; lowest first."""
    entries = []
    for li, idx in enumerate(net.conv_layer_indices):
        w = net.weights[idx]
        sums = np.abs(w).sum(axis=(1, 2, 3))
        entries.extend((li, fi, float(sums[fi])) for fi in range(w.shape[0]))
    return _ranked(entries, "l1")


def _conv_activation_fns(net: engine.Network) -> list[str | None]:
    """Activation kind recorded for each conv ordinal (None = bare conv output)."""
    fns: list[str | None] = []
    for idx in net.conv_layer_indices:
        nxt = net.layers[idx + 1] if idx + 1 < len(net.layers) else None
        fns.append(nxt.fn if isinstance(nxt, engine.Activation) else None)
    return fns


def score_apoz(
    net: engine.Network, dataset, batch_size: int = 256, tanh_tol: float = 1e-12
) -> list[FilterScore]:
    """Average percentage of zeros over all samples and spatial positions.

    Needs the full spatial maps, so this runs its own forward pass rather than
    consuming a mean-reduced trace. "Zero" is exact 0.0 after relu; for tanh
    (and bare conv outputs) |x| < tanh_tol counts. Highest fraction first.
    """
    fns = _conv_activation_fns(net)
    zero_counts = [np.zeros(c) for c in net.filter_counts()]
    totals = [0] * len(zero_counts)
    for sl in engine._batch_slices(len(dataset), batch_size):
        _, conv_acts = engine.forward(net, dataset.images[sl])
        for li, act in enumerate(conv_acts):
            if fns[li] == "relu":
                zeros = act == 0.0
            else:
                zeros = np.abs(act) < tanh_tol
            zero_counts[li] += zeros.sum(axis=(0, 2, 3))
            totals[li] += act.shape[0] * act.shape[2] * act.shape[3]
    entries = [
        (li, fi, float(zero_counts[li][fi] / totals[li]))
        for li in range(len(zero_counts))
        for fi in range(len(zero_counts[li]))
    ]
    return _ranked(entries, "apoz")


def score_taylor(net: engine.Network, dataset, batch_size: int = 256) -> list[FilterScore]:
    """|mean over samples and positions of activation * activation-gradient|.

    The gradient is taken w.r.t. the post-activation feature map of the summed
    loss, so the average over M = samples x positions does not depend on how
    the dataset is batched. Lowest scores are pruned first.
    """
    sums = [np.zeros(c) for c in net.filter_counts()]
    totals = [0] * len(sums)
    for sl in engine._batch_slices(len(dataset), batch_size):
        x, y = dataset.images[sl], dataset.labels[sl]
        _, _, act_grads = engine.loss_and_grads(net, x, y)
        _, conv_acts = engine.forward(net, x)
        for li in range(len(sums)):
            sums[li] += (act_grads[li] * conv_acts[li]).sum(axis=(0, 2, 3))
            totals[li] += conv_acts[li].shape[0] * conv_acts[li].shape[2] * conv_acts[li].shape[3]
    entries = [
        (li, fi, float(abs(sums[li][fi] / totals[li])))
        for li in range(len(sums))
        for fi in range(len(sums[li]))
    ]
    return _ranked(entries, "taylor")


def _layer_sizes_from_scores(scores: list[FilterScore]) -> list[int]:
    by_layer: dict[int, set[int]] = {}
    for s in scores:
        by_layer.setdefault(s.layer, set()).add(s.filter)
    if not by_layer:
        return []
    n_layers = max(by_layer) + 1
    sizes = []
    for li in range(n_layers):
        filters = by_layer.get(li, set())
        if filters != set(range(len(filters))):
            raise CriteriaError(f"scores do not cover layer {li} contiguously")
        sizes.append(len(filters))
    return sizes


def rank_and_select(
    scores: list[FilterScore],
    layer_scope: str = "global",
    amount: float | int = 0,
    direction: str = "auto",
) -> PrunePlan:
    """Turn scores into a PrunePlan.

    Global scope ranks all filters jointly and removes the first `amount`
    (an integer count, or a fraction of the total, rounded up). Per-layer
    scope removes ceil(fraction * n_l) per layer (or a fixed count per layer
    when `amount` is an integer). Ties break on (layer, filter). A selection
    that would empty any layer is rejected, naming the layer.
    """
    if layer_scope not in ("global", "per-layer"):
        raise CriteriaError(f"unknown layer_scope {layer_scope!r}")
    if not scores:
        raise CriteriaError("no scores given")
    criterion = scores[0].criterion
    if direction == "auto":
        direction = PRUNE_DIRECTION[criterion]
    if direction not in ("asc", "desc"):
        raise CriteriaError(f"unknown direction {direction!r}")
    sizes = _layer_sizes_from_scores(scores)
    sign = 1.0 if direction == "asc" else -1.0
    ordered = sorted(scores, key=lambda s: (sign * s.score, s.layer, s.filter))

    removed: dict[int, list[int]] = {li: [] for li in range(len(sizes))}
    if layer_scope == "global":
        r = int(math.ceil(amount * len(scores))) if isinstance(amount, float) else int(amount)
        if r < 0 or r > len(scores):
            raise CriteriaError(f"global amount {amount!r} out of range")
        for s in ordered[:r]:
            removed[s.layer].append(s.filter)
    else:
        for li, n_l in enumerate(sizes):
            k = int(math.ceil(amount * n_l)) if isinstance(amount, float) else int(amount)
            layer_scores = [s for s in ordered if s.layer == li]
            for s in layer_scores[:k]:
                removed[li].append(s.filter)

    for li, n_l in enumerate(sizes):
        if len(removed[li]) >= n_l and n_l > 0:
            raise CriteriaError(f"selection would empty layer {li} ({n_l} filters)")
    return PrunePlan.from_removals(removed, sizes, criterion, layer_scope, amount)
