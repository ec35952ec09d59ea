"""Information-plane noise experiment: entropy vs input noise power.

Adds seeded Gaussian noise of growing strength to the inputs and tracks the
per-layer average activation entropy and mutual information. The first conv
layer's entropy rises with the noise level; deeper layers respond less until
the noise is strong, since the network suppresses small perturbations.
"""

import numpy as np

from entprune import NoiseSpec, SgdConfig, add_gaussian_noise, build_preset, synthetic_blobs, train
from entprune.entstats import QuantSpec, activation_entropy, mutual_information
from entprune.trace import accumulators_from_trace, capture

full = synthetic_blobs(6000, num_classes=10, image_size=28, seed=7)
train_ds = full.subset(np.arange(5000))
probe_ds = full.subset(np.arange(5000, 6000))

net = build_preset("mnist2conv", seed=7)
net, _ = train(net, train_ds, SgdConfig(learning_rate=0.05, batch_size=32, seed=7), epochs=6)

print(f"{'std':>6} {'layer':>6} {'act_ent':>9} {'MI':>7}")
for si, std in enumerate([0.0, 0.05, 0.1, 0.2, 0.4]):
    noised = add_gaussian_noise(probe_ds, NoiseSpec(std, seed=100 + si))
    tf = capture(net, noised)
    accs = accumulators_from_trace(tf, QuantSpec())
    for li, layer in enumerate(accs):
        act = float(np.mean([activation_entropy(a) for a in layer]))
        mi = float(np.mean([mutual_information(a) for a in layer]))
        print(f"{std:>6.2f} {li:>6} {act:>9.4f} {mi:>7.4f}")
