"""The full two-phase pruning procedure on a desk-scale network.

Phase 1 prunes filter groups globally in ascending conditional-entropy order
with fine-tuning after every step, gated by a 1% accuracy-drop threshold.
Phase 2 prunes a fixed fraction of every layer per iteration with bias
compensation, gated by gamma = 2% against the original baseline. The run
ends with a before/after report including measured inference time.
"""

import numpy as np

from entprune import PhaseConfig, SgdConfig, build_preset, run_2pfpce, synthetic_blobs, train
from entprune.entstats import QuantSpec

full = synthetic_blobs(6000, num_classes=10, image_size=28, seed=11)
train_ds = full.subset(np.arange(5000))
test_ds = full.subset(np.arange(5000, 6000))

net = build_preset("mnist2conv", seed=11)
net, _ = train(net, train_ds, SgdConfig(learning_rate=0.05, batch_size=32, seed=11), epochs=6)

cfg = PhaseConfig(
    phase1_drop_threshold=0.01,
    phase2_drop_threshold=0.02,
    phase1_step=1,
    phase2_fraction=1.0 / 16.0,
    finetune=SgdConfig(learning_rate=0.01, momentum=0.9, weight_decay=1e-4, batch_size=32, seed=11),
    finetune_updates=20,
    quant=QuantSpec(eps_h=1e4),
    trace_limit=1500,
    workers=2,
)
pruned, log, report = run_2pfpce(net, train_ds, cfg, seed=11, test=test_ds, bench_repeats=5)

print(f"{'iter':>4} {'phase':>5} {'filters':>8} {'flops':>10} {'accuracy':>9}")
for e in log:
    print(f"{e.iteration:>4} {e.phase:>5} {e.filters_remaining:>8} {e.flops:>10} {e.accuracy:>9.4f}")

b, a = report["before"], report["after"]
print(f"\nfilters  {b['filters']} -> {a['filters']}  (pruning ratio {report['pruning_ratio']:.2f})")
print(f"FLOPs    {b['flops']:,} -> {a['flops']:,}  ({report['flops_reduction']:.2f}x)")
print(f"bytes    {b['bytes']:,} -> {a['bytes']:,}")
print(f"accuracy {b['accuracy']:.4f} -> {a['accuracy']:.4f}")
print(f"latency  {b['bench_ms']:.1f} ms -> {a['bench_ms']:.1f} ms  ({report['speedup']:.2f}x)")
