"""Independent slow-path oracles used by the test suite.

Everything here is deliberately written the straightforward way (nested
loops, raw-pair recounting, finite differences) and stays independent of the
library's fast paths it is used to check.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict

import numpy as np

from entprune import engine


def naive_conv2d(x, w, b, stride=1, padding=0):
    """Nested-loop 2D convolution, (N,Cin,H,W) x (Cout,Cin,k,k) -> (N,Cout,Ho,Wo)."""
    n, cin, h, wid = x.shape
    cout, _, k, _ = w.shape
    if padding:
        xp = np.zeros((n, cin, h + 2 * padding, wid + 2 * padding))
        xp[:, :, padding : padding + h, padding : padding + wid] = x
    else:
        xp = x
    hp, wp = xp.shape[2], xp.shape[3]
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    for ni in range(n):
        for co in range(cout):
            for oh in range(ho):
                for ow in range(wo):
                    acc = 0.0
                    for ci in range(cin):
                        for ki in range(k):
                            for kj in range(k):
                                acc += w[co, ci, ki, kj] * xp[ni, ci, oh * stride + ki, ow * stride + kj]
                    out[ni, co, oh, ow] = acc + b[co]
    return out


def naive_maxpool2d(x, window, stride):
    n, c, h, w = x.shape
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    out = np.zeros((n, c, ho, wo))
    for ni in range(n):
        for ci in range(c):
            for oh in range(ho):
                for ow in range(wo):
                    out[ni, ci, oh, ow] = x[
                        ni, ci, oh * stride : oh * stride + window, ow * stride : ow * stride + window
                    ].max()
    return out


def naive_dense(x, w, b):
    n, fin = x.shape
    fout = w.shape[0]
    out = np.zeros((n, fout))
    for ni in range(n):
        for fo in range(fout):
            acc = 0.0
            for fi in range(fin):
                acc += w[fo, fi] * x[ni, fi]
            out[ni, fo] = acc + b[fo]
    return out


def naive_forward(net, batch):
    """Straightforward re-implementation of the whole forward pass."""
    x = np.asarray(batch, dtype=np.float64)
    for i, spec in enumerate(net.layers):
        if isinstance(spec, engine.Conv2D):
            x = naive_conv2d(x, net.weights[i], net.biases[i], spec.stride, spec.padding)
        elif isinstance(spec, engine.MaxPool2D):
            x = naive_maxpool2d(x, spec.window, spec.effective_stride)
        elif isinstance(spec, engine.Activation):
            x = np.maximum(x, 0.0) if spec.fn == "relu" else np.tanh(x)
        elif isinstance(spec, engine.Flatten):
            x = x.reshape(x.shape[0], -1)
        elif isinstance(spec, engine.Dense):
            x = naive_dense(x, net.weights[i], net.biases[i])
        elif isinstance(spec, engine.SoftmaxCrossEntropy):
            pass
    return x


def mean_loss(net, batch, labels):
    logits = naive_forward(net, batch)
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    return float(np.mean(lse - logits[np.arange(len(labels)), labels]))


def fd_param_grads(net, batch, labels, h=1e-6):
    """Central finite differences of the mean loss for every parameter."""
    grads = []
    for i in range(len(net.layers)):
        if net.weights[i] is None:
            grads.append(None)
            continue
        dw = np.zeros_like(net.weights[i])
        db = np.zeros_like(net.biases[i])
        for arr, g in ((net.weights[i], dw), (net.biases[i], db)):
            flat = arr.ravel()
            gflat = g.ravel()
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + h
                up = mean_loss(net, batch, labels)
                flat[k] = orig - h
                down = mean_loss(net, batch, labels)
                flat[k] = orig
                gflat[k] = (up - down) / (2.0 * h)
        grads.append((dw, db))
    return grads


# --------------------------------------------------------------------------
# Entropy oracles: recompute from raw (activation, loss) pairs
# --------------------------------------------------------------------------

def quantize_pair(a, loss, eps_h=1e4):
    return math.floor(eps_h * a), math.floor(eps_h * loss)


def entropies_from_pairs(pairs, eps_h=1e4):
    """act_ent / con_ent / loss_ent / mi recomputed from the raw pair list.

    Same quantization and per-term formula as the library (so exact equality
    is meaningful), but counts come straight from the pairs, never from an
    accumulator.
    """
    bins = [quantize_pair(a, l, eps_h) for a, l in pairs]
    t = len(bins)
    c_val = Counter(i for i, _ in bins)
    per_i: dict[int, Counter] = defaultdict(Counter)
    for i, j in bins:
        per_i[i][j] += 1
    marginal = Counter(j for _, j in bins)

    act_ent = math.fsum(
        -(c / t) * math.log2(c / t) for i, c in c_val.items() if i != 0
    )
    ent_i = {
        i: (c_val[i] / t)
        * math.fsum(-(c / c_val[i]) * math.log2(c / c_val[i]) for c in per_i[i].values())
        for i in c_val
    }
    con_ent = math.fsum(ent_i.values())
    loss_ent = math.fsum(-(c / t) * math.log2(c / t) for c in marginal.values())
    return {
        "act_ent": act_ent,
        "con_ent": con_ent,
        "ent_i": ent_i,
        "loss_ent": loss_ent,
        "mi": loss_ent - con_ent,
    }


def mi_direct_formula(pairs, eps_h=1e4):
    """Mutual information via sum p(i,j) * log2(p(i,j) / (p(i) q(j)))."""
    bins = [quantize_pair(a, l, eps_h) for a, l in pairs]
    t = len(bins)
    joint = Counter(bins)
    pi = Counter(i for i, _ in bins)
    qj = Counter(j for _, j in bins)
    return math.fsum(
        (c / t) * math.log2((c / t) / ((pi[i] / t) * (qj[j] / t)))
        for (i, j), c in joint.items()
    )
