"""Score filters under all five criteria, prune, and reconcile the network.

Shows the prune-direction conventions (ascending for conditional entropy,
activation entropy, L1 and Taylor; descending for APoZ), plan construction,
bias compensation from the modal activation, and freeze marking.
"""

import numpy as np

from entprune import (
    SgdConfig,
    build_preset,
    count_flops,
    evaluate,
    rank_and_select,
    score_act_ent,
    score_apoz,
    score_cond_ent,
    score_l1,
    score_taylor,
    synthetic_blobs,
    train,
)
from entprune.entstats import QuantSpec, conditional_entropy
from entprune.surgery import bias_compensate, mark_freeze, remove_filters
from entprune.trace import accumulators_from_trace, capture, trace_restrict

full = synthetic_blobs(2400, num_classes=10, image_size=28, seed=2)
train_ds = full.subset(np.arange(2000))
test_ds = full.subset(np.arange(2000, 2400))

net = build_preset("mnist2conv", seed=2)
net, _ = train(net, train_ds, SgdConfig(learning_rate=0.05, batch_size=32, seed=2), epochs=4)
baseline = evaluate(net, test_ds)
print(f"baseline accuracy {baseline:.4f}, FLOPs {count_flops(net):,}")

tf = capture(net, train_ds)
all_scores = {
    "cond_ent": score_cond_ent(tf),
    "act_ent": score_act_ent(tf),
    "l1": score_l1(net),
    "apoz": score_apoz(net, train_ds),
    "taylor": score_taylor(net, train_ds),
}
for name, scores in all_scores.items():
    first = min(scores, key=lambda s: s.prune_rank)
    print(f"  {name:>8}: first to prune = layer {first.layer} filter {first.filter} "
          f"(score {first.score:.5f})")

# Prune a quarter of each layer by conditional entropy, compensating consumer
# biases with each removed filter's modal activation (argmax ent_i).
plan = rank_and_select(all_scores["cond_ent"], layer_scope="per-layer", amount=0.25)
accs = accumulators_from_trace(tf, QuantSpec())
triples = [
    (li, fi, conditional_entropy(accs[li][fi]).argmax_activation)
    for li, gone in plan.removed.items()
    for fi in gone
]
compensated = bias_compensate(net, triples)
pruned = remove_filters(compensated, plan)
pruned = mark_freeze(pruned, trace_restrict(tf, plan.removed), layers=sorted(plan.removed))

print(f"pruned {plan.n_removed()} filters: {net.filter_counts()} -> {pruned.filter_counts()}")
print(f"FLOPs {count_flops(net):,} -> {count_flops(pruned):,}")
print(f"accuracy after surgery (no fine-tune): {evaluate(pruned, test_ds):.4f}")
print(f"frozen max-entropy survivors: {dict(pruned.freeze)}")
