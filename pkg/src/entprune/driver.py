"""Two-phase pruning orchestration.

Phase 1 prunes globally, filter by filter in ascending conditional-entropy
order, freezing each pruned layer's maximum-activation-entropy survivor and
fine-tuning after every removal, until the held-out accuracy drops more than
the phase-1 threshold below the baseline (the violating step is reverted).
Phase 2 prunes a fixed fraction of every layer per iteration, compensating
consumer biases with each removed filter's modal activation, fine-tuning only
every few iterations, until the drop exceeds gamma relative to the original
baseline. Accuracy gates run on a held-out validation split; everything is
seeded, so identical seeds give identical prune sequences.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .criteria import (
    PrunePlan,
    rank_and_select,
    score_act_ent,
    score_apoz,
    score_cond_ent,
    score_l1,
    score_taylor,
)
from .data import Dataset, batches, split_dataset
from .entstats import QuantSpec, conditional_entropy
from .surgery import bias_compensate, mark_freeze, remove_filters
from .trace import accumulators_from_trace, capture, trace_restrict

__all__ = [
    "PhaseConfig",
    "PruneLogEntry",
    "DriverError",
    "train",
    "finetune",
    "phase1_global",
    "phase2_layerwise",
    "run_2pfpce",
    "criteria_comparison",
    "bench_inference",
]


class DriverError(Exception):
    pass


@dataclass(frozen=True)
class PhaseConfig:
    phase1_drop_threshold: float = 0.01
    phase2_drop_threshold: float = 0.02  # gamma, measured vs the original baseline
    phase1_step: int = 1
    phase2_fraction: float = 1.0 / 16.0
    finetune: engine.SgdConfig = field(default_factory=engine.SgdConfig)
    finetune_updates: int = 20
    phase2_finetune_every: int = 4  # 0 = never fine-tune in phase 2
    val_fraction: float = 0.1
    quant: QuantSpec = field(default_factory=QuantSpec)
    trace_limit: int | None = None  # cap on samples per trace capture
    compensate_bias: bool = True
    freeze_max_ent: bool = True
    workers: int = 1  # thread shards for capture/evaluate (results identical)

    def __post_init__(self):
        if not 0.0 <= self.phase1_drop_threshold <= 1.0:
            raise ValueError("phase1_drop_threshold must lie in [0, 1]")
        if not 0.0 <= self.phase2_drop_threshold <= 1.0:
            raise ValueError("phase2_drop_threshold must lie in [0, 1]")
        if self.phase1_step < 1:
            raise ValueError("phase1_step must be >= 1")
        if not 0.0 < self.phase2_fraction <= 1.0:
            raise ValueError("phase2_fraction must lie in (0, 1]")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class PruneLogEntry:
    iteration: int
    phase: int
    filters_remaining: int
    flops: int
    bytes: int
    accuracy: float
    wall_time_ms: float


# --------------------------------------------------------------------------
# Training loops
# --------------------------------------------------------------------------

def train(
    net: engine.Network,
    dataset: Dataset,
    sgd: engine.SgdConfig,
    epochs: int,
    shuffle_seed: int | None = None,
):
    """Epoch-based SGD; momentum carries across the whole run. Returns the
    trained network and one (epoch, mean_loss) row per epoch."""
    base_seed = sgd.seed if shuffle_seed is None else shuffle_seed
    velocity = None
    history = []
    for epoch in range(epochs):
        losses = []
        for batch in batches(dataset, sgd.batch_size, shuffle_seed=base_seed + epoch):
            per_sample, grads, _ = engine.loss_and_grads(net, batch.images, batch.labels)
            net, velocity = engine.sgd_step(net, grads, sgd, velocity)
            losses.append(float(per_sample.mean()))
        history.append((epoch, float(np.mean(losses))))
    return net, history


def finetune(
    net: engine.Network,
    dataset: Dataset,
    sgd: engine.SgdConfig,
    updates: int,
) -> engine.Network:
    """Run a fixed number of minibatch updates (fresh momentum), cycling
    through seeded epochs if the dataset runs out. Freeze sets are honored by
    sgd_step."""
    velocity = None
    done = 0
    epoch = 0
    while done < updates:
        for batch in batches(dataset, sgd.batch_size, shuffle_seed=sgd.seed + epoch):
            if done >= updates:
                break
            _, grads, _ = engine.loss_and_grads(net, batch.images, batch.labels)
            net, velocity = engine.sgd_step(net, grads, sgd, velocity)
            done += 1
        epoch += 1
    return net


# --------------------------------------------------------------------------
# Phase loops
# --------------------------------------------------------------------------

def _trace_subset(ds: Dataset, limit: int | None) -> Dataset:
    if limit is None or limit >= len(ds):
        return ds
    return ds.subset(np.arange(limit))


def _log_entry(iteration, phase, net, acc, t0) -> PruneLogEntry:
    return PruneLogEntry(
        iteration=iteration,
        phase=phase,
        filters_remaining=net.total_filters(),
        flops=engine.count_flops(net),
        bytes=engine.param_bytes(net),
        accuracy=acc,
        wall_time_ms=(time.perf_counter() - t0) * 1000.0,
    )


def _select_global_guarded(scores, sizes, step):
    """Lowest-score-first global pick that never empties a layer."""
    remaining = list(sizes)
    removed: dict[int, list[int]] = {li: [] for li in range(len(sizes))}
    taken = 0
    for s in sorted(scores, key=lambda s: (s.score, s.layer, s.filter)):
        if taken >= step:
            break
        if remaining[s.layer] <= 1:
            continue
        removed[s.layer].append(s.filter)
        remaining[s.layer] -= 1
        taken += 1
    return removed if taken else None


def phase1_global(net: engine.Network, dataset: Dataset, cfg: PhaseConfig, seed: int = 0):
    """Global filter-by-filter pruning gated by the phase-1 accuracy threshold.

    Returns (network, log) where log holds only accepted iterations; a step
    whose post-fine-tune accuracy falls below baseline - threshold is
    reverted and ends the phase.
    """
    train_part, val = split_dataset(dataset, cfg.val_fraction, seed)
    trace_ds = _trace_subset(train_part, cfg.trace_limit)
    baseline = engine.evaluate(net, val, workers=cfg.workers)
    current = net
    log: list[PruneLogEntry] = []
    iteration = 0
    while True:
        t0 = time.perf_counter()
        tf = capture(current, trace_ds, workers=cfg.workers)
        scores = score_cond_ent(tf, cfg.quant)
        removed = _select_global_guarded(scores, current.filter_counts(), cfg.phase1_step)
        if removed is None:
            break  # min-width guard: nothing prunable is left
        plan = PrunePlan.from_removals(
            removed, current.filter_counts(), "cond_ent", "global", cfg.phase1_step
        )
        candidate = remove_filters(current, plan)
        if cfg.freeze_max_ent:
            pruned_layers = [li for li, gone in plan.removed.items() if gone]
            restricted = trace_restrict(tf, plan.removed)
            candidate = mark_freeze(candidate, restricted, layers=pruned_layers, quant=cfg.quant)
        candidate = finetune(candidate, train_part, cfg.finetune, cfg.finetune_updates)
        acc = engine.evaluate(candidate, val, workers=cfg.workers)
        iteration += 1
        if acc < baseline - cfg.phase1_drop_threshold:
            break  # revert: candidate is dropped, current stands
        current = candidate
        log.append(_log_entry(iteration, 1, current, acc, t0))
    return current, log


def _phase2_selection(tf, cfg):
    """Per-layer lowest-con_ent picks of ceil(fraction * n_l), clamped so no
    layer empties; returns (removed, a_star) or None when every layer is at
    the min-width guard."""
    accs = accumulators_from_trace(tf, cfg.quant)
    removed: dict[int, list[int]] = {}
    a_star: dict[tuple[int, int], float] = {}
    any_taken = False
    for li, layer_accs in enumerate(accs):
        n_l = len(layer_accs)
        k = min(int(math.ceil(cfg.phase2_fraction * n_l)), n_l - 1)
        if k <= 0:
            removed[li] = []
            continue
        results = [conditional_entropy(a) for a in layer_accs]
        order = sorted(range(n_l), key=lambda f: (results[f].con_ent, f))
        picks = order[:k]
        removed[li] = sorted(picks)
        for f in picks:
            a_star[(li, f)] = results[f].argmax_activation
        any_taken = True
    return (removed, a_star) if any_taken else None


def phase2_layerwise(
    net: engine.Network,
    dataset: Dataset,
    cfg: PhaseConfig,
    seed: int = 0,
    baseline: float | None = None,
):
    """Layer-wise fractional pruning with bias compensation, gated by gamma.

    `baseline` is the accuracy the drop is measured against (the original
    pre-phase-1 baseline in the two-phase procedure); None recomputes it from
    the incoming network.
    """
    train_part, val = split_dataset(dataset, cfg.val_fraction, seed)
    trace_ds = _trace_subset(train_part, cfg.trace_limit)
    if baseline is None:
        baseline = engine.evaluate(net, val, workers=cfg.workers)
    current = net
    log: list[PruneLogEntry] = []
    iteration = 0
    while True:
        t0 = time.perf_counter()
        tf = capture(current, trace_ds, workers=cfg.workers)
        selection = _phase2_selection(tf, cfg)
        if selection is None:
            break  # min-width guard halted the loop
        removed, a_star = selection
        plan = PrunePlan.from_removals(
            removed, current.filter_counts(), "cond_ent", "per-layer", cfg.phase2_fraction, a_star
        )
        candidate = current
        if cfg.compensate_bias:
            triples = [(li, f, a_star[(li, f)]) for li, gone in removed.items() for f in gone]
            candidate = bias_compensate(candidate, triples)
        candidate = remove_filters(candidate, plan)
        iteration += 1
        if cfg.phase2_finetune_every and iteration % cfg.phase2_finetune_every == 0:
            candidate = finetune(candidate, train_part, cfg.finetune, cfg.finetune_updates)
        acc = engine.evaluate(candidate, val, workers=cfg.workers)
        if acc < baseline - cfg.phase2_drop_threshold:
            break  # revert
        current = candidate
        log.append(_log_entry(iteration, 2, current, acc, t0))
    return current, log


def run_2pfpce(
    net: engine.Network,
    dataset: Dataset,
    cfg: PhaseConfig,
    seed: int = 0,
    test: Dataset | None = None,
    bench_repeats: int = 10,
    bench_batch_size: int = 32,
):
    """Full two-phase procedure. Returns (network, log, report).

    The report compares filters / FLOPs / bytes / accuracy / measured
    inference time before and after; accuracy is reported on `test` when
    given, else on the internal validation split.
    """
    _, val = split_dataset(dataset, cfg.val_fraction, seed)
    eval_ds = test if test is not None else val
    bench_ds = eval_ds

    baseline_val = engine.evaluate(net, val, workers=cfg.workers)
    baseline_acc = engine.evaluate(net, eval_ds, workers=cfg.workers)
    baseline_ms = bench_inference(net, bench_ds, repeats=bench_repeats, batch_size=bench_batch_size)
    before = {
        "filters": net.total_filters(),
        "flops": engine.count_flops(net),
        "bytes": engine.param_bytes(net),
        "accuracy": baseline_acc,
        "bench_ms": baseline_ms,
    }

    net1, log1 = phase1_global(net, dataset, cfg, seed=seed)
    net2, log2 = phase2_layerwise(net1, dataset, cfg, seed=seed, baseline=baseline_val)
    log = log1 + log2

    final_ms = bench_inference(net2, bench_ds, repeats=bench_repeats, batch_size=bench_batch_size)
    after = {
        "filters": net2.total_filters(),
        "flops": engine.count_flops(net2),
        "bytes": engine.param_bytes(net2),
        "accuracy": engine.evaluate(net2, eval_ds, workers=cfg.workers),
        "bench_ms": final_ms,
    }
    report = {
        "before": before,
        "after": after,
        "pruning_ratio": 1.0 - after["filters"] / before["filters"],
        "flops_reduction": before["flops"] / after["flops"],
        "speedup": before["bench_ms"] / final_ms if final_ms > 0 else float("inf"),
        "phase1_iterations": len(log1),
        "phase2_iterations": len(log2),
        "bench_batch_size": bench_batch_size,
        "baseline_val_accuracy": baseline_val,
        "phase1_drop_threshold": cfg.phase1_drop_threshold,
        "phase2_drop_threshold": cfg.phase2_drop_threshold,
    }
    return net2, log, report


# --------------------------------------------------------------------------
# Criteria comparison and benchmarking
# --------------------------------------------------------------------------

def criteria_comparison(
    net: engine.Network,
    dataset: Dataset,
    criteria_names: list[str],
    ratios: list[float],
    cfg: PhaseConfig,
    seed: int = 0,
    test: Dataset | None = None,
):
    """Layer-wise one-shot prune at each ratio per criterion, identical
    fine-tune budget everywhere; returns the accuracy grid."""
    train_part, val = split_dataset(dataset, cfg.val_fraction, seed)
    trace_ds = _trace_subset(train_part, cfg.trace_limit)
    eval_ds = test if test is not None else val

    tf = None
    scores: dict[str, list] = {}
    for name in criteria_names:
        if name in ("cond_ent", "act_ent") and tf is None:
            tf = capture(net, trace_ds, workers=cfg.workers)
        if name == "cond_ent":
            scores[name] = score_cond_ent(tf, cfg.quant)
        elif name == "act_ent":
            scores[name] = score_act_ent(tf, cfg.quant)
        elif name == "l1":
            scores[name] = score_l1(net)
        elif name == "apoz":
            scores[name] = score_apoz(net, trace_ds)
        elif name == "taylor":
            scores[name] = score_taylor(net, trace_ds)
        else:
            raise DriverError(f"unknown criterion {name!r}")

    grid: dict[str, dict[float, float]] = {name: {} for name in criteria_names}
    for name in criteria_names:
        for ratio in ratios:
            plan = rank_and_select(scores[name], layer_scope="per-layer", amount=float(ratio))
            pruned = remove_filters(net, plan)
            pruned = finetune(pruned, train_part, cfg.finetune, cfg.finetune_updates)
            grid[name][float(ratio)] = engine.evaluate(pruned, eval_ds, workers=cfg.workers)
    return {
        "baseline_accuracy": engine.evaluate(net, eval_ds, workers=cfg.workers),
        "ratios": [float(r) for r in ratios],
        "criteria": list(criteria_names),
        "grid": grid,
    }


def bench_inference(
    net: engine.Network, dataset: Dataset, repeats: int = 10, batch_size: int = 32
) -> float:
    """Median wall-clock milliseconds of a full-dataset forward pass.

    One untimed warm-up pass runs first; `repeats` timed passes follow.
    """
    if repeats < 1:
        raise DriverError("repeats must be >= 1")
    slices = engine._batch_slices(len(dataset), batch_size)
    images = dataset.images

    def one_pass() -> float:
        t0 = time.perf_counter()
        for sl in slices:
            engine.forward(net, images[sl])
        return (time.perf_counter() - t0) * 1000.0

    one_pass()  # warm-up, excluded
    times = [one_pass() for _ in range(repeats)]
    return float(np.median(times))
