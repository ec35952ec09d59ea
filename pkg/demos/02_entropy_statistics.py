"""Per-filter entropy statistics from an activation/loss trace.

Captures one record per sample (cross-entropy loss plus each filter's
spatial-mean activation), quantizes them into histograms, and reports the
quantities the pruning criteria are built from: activation entropy,
conditional entropy, the per-bin ent_i table, and mutual information.
"""

import numpy as np

from entprune import SgdConfig, build_preset, synthetic_blobs, train
from entprune.entstats import (
    QuantSpec,
    activation_entropy,
    conditional_entropy,
    loss_entropy,
    mutual_information,
)
from entprune.trace import accumulators_from_trace, capture

full = synthetic_blobs(2400, num_classes=10, image_size=28, seed=1)
train_ds = full.subset(np.arange(2000))

net = build_preset("mnist2conv", seed=1)
net, _ = train(net, train_ds, SgdConfig(learning_rate=0.05, batch_size=32, seed=1), epochs=3)

tf = capture(net, train_ds, reduction="mean")
print(f"trace: {len(tf.records)} records over conv layers sized {tf.layer_sizes}")

accs = accumulators_from_trace(tf, QuantSpec(eps_h=1e4))
print(f"{'layer':>5} {'filter':>6} {'act_ent':>9} {'con_ent':>9} {'max ent_i':>10} "
      f"{'a* (argmax act)':>16} {'MI':>7}")
for li, layer in enumerate(accs):
    for fi, acc in enumerate(layer):
        ce = conditional_entropy(acc)
        print(f"{li:>5} {fi:>6} {activation_entropy(acc):>9.3f} {ce.con_ent:>9.3f} "
              f"{ce.ent[ce.argmax_bin]:>10.4f} {ce.argmax_activation:>16.4f} "
              f"{mutual_information(acc):>7.3f}")

# Sanity identities on one accumulator: conditioning can only reduce entropy,
# and MI is the gap between the loss marginal and the conditional.
acc = accs[0][0]
assert 0.0 <= conditional_entropy(acc).con_ent <= loss_entropy(acc)
assert abs(mutual_information(acc) - (loss_entropy(acc) - conditional_entropy(acc).con_ent)) == 0.0
print("entropy identities hold")
