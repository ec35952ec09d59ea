"""Acceptance suite: every gate at its stated tolerance.

Run with plain `pytest`; a one-line PASS/FAIL summary per criterion prints at
the end of the session (see conftest.pytest_terminal_summary). The two
experiment-scale criteria train networks from scratch; when real MNIST IDX
files are available under ENTPRUNE_DATA_DIR they are used, otherwise the
bundled synthetic generator substitutes at identical scale (10k train / 2k
test, 1x28x28, 10 classes).
"""

import math
import os
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from entprune import data, driver, engine, entstats, models, surgery
from entprune.criteria import PrunePlan
from entprune.data import NoiseSpec, add_gaussian_noise
from entprune.driver import PhaseConfig
from entprune.entstats import EntropyAccumulator, QuantSpec
from entprune.trace import TraceFile, TraceRecord, accumulators_from_trace, capture, read_trace, write_trace

from conftest import ACCEPTANCE_RESULTS, strided_layers, toy_layers
import oracles


@contextmanager
def criterion(num: int, title: str):
    info = {"detail": ""}
    try:
        yield info
    except BaseException:
        ACCEPTANCE_RESULTS[num] = ("FAIL", title, info["detail"])
        raise
    ACCEPTANCE_RESULTS[num] = ("PASS", title, info["detail"])


# --------------------------------------------------------------------------
# Shared experiment fixtures (trained once per session)
# --------------------------------------------------------------------------

def _desk_datasets():
    """10k/2k at 1x28x28: real MNIST when present, synthetic otherwise."""
    root = os.environ.get("ENTPRUNE_DATA_DIR", "")
    if root and (Path(root) / "train-images-idx3-ubyte").exists():
        train = data.load_idx(
            Path(root) / "train-images-idx3-ubyte", Path(root) / "train-labels-idx1-ubyte"
        ).subset(np.arange(10_000))
        test = data.load_idx(
            Path(root) / "t10k-images-idx3-ubyte", Path(root) / "t10k-labels-idx1-ubyte"
        ).subset(np.arange(2_000))
        return train, test
    full = data.synthetic_blobs(
        12_000, num_classes=10, image_size=28, seed=42, jitter=1.3, pixel_noise=0.04
    )
    return full.subset(np.arange(10_000)), full.subset(np.arange(10_000, 12_000))


@pytest.fixture(scope="session")
def desk_data():
    return _desk_datasets()


@pytest.fixture(scope="session")
def trained_mnist2conv(desk_data):
    train_ds, _ = desk_data
    net = models.build_preset("mnist2conv", seed=21)
    sgd = engine.SgdConfig(learning_rate=0.05, momentum=0.9, weight_decay=1e-4, batch_size=32, seed=21)
    net, _ = driver.train(net, train_ds, sgd, epochs=8)
    return net


@pytest.fixture(scope="session")
def trained_mini_vgg(desk_data):
    train_ds, _ = desk_data
    net = models.build_preset("mini-vgg", seed=42)
    for epoch, lr in enumerate([0.05] * 4 + [0.02] * 4 + [0.01] * 2):
        sgd = engine.SgdConfig(learning_rate=lr, momentum=0.9, weight_decay=1e-4, batch_size=32, seed=42)
        net, _ = driver.train(net, train_ds, sgd, epochs=1, shuffle_seed=42 + epoch)
    return net


def desk_phase_config():
    return PhaseConfig(
        phase1_drop_threshold=0.01,
        phase2_drop_threshold=0.02,
        phase1_step=4,  # the documented speed knob; selection order is unchanged
        phase2_fraction=1.0 / 16.0,
        finetune=engine.SgdConfig(learning_rate=0.01, momentum=0.9, weight_decay=1e-4, batch_size=32, seed=5),
        finetune_updates=20,
        phase2_finetune_every=4,
        val_fraction=0.1,
        quant=QuantSpec(eps_h=1e4),
        trace_limit=1024,
        workers=2,
    )


# --------------------------------------------------------------------------
# Criterion 1: histogram path equals the raw-pair oracle exactly
# --------------------------------------------------------------------------

def test_criterion_1_entstats_oracle_equivalence():
    with criterion(1, "entstats oracle equivalence (exact, 32 filters x 1000 traces)") as info:
        t0 = time.monotonic()
        rng = np.random.default_rng(1234)
        activations = rng.uniform(-1.5, 1.5, size=(1000, 32))
        # a spread of loss scales, plus exact zeros to exercise the zero bin
        losses = rng.uniform(0.0, 4.0, size=1000)
        activations[rng.uniform(size=(1000, 32)) < 0.1] = 0.0

        for f in range(32):
            pairs = [(float(activations[i, f]), float(losses[i])) for i in range(1000)]
            acc = EntropyAccumulator(QuantSpec())
            for a, l in pairs:
                acc.add_raw(a, l)
            want = oracles.entropies_from_pairs(pairs)
            assert entstats.activation_entropy(acc) == want["act_ent"]
            assert entstats.conditional_entropy(acc).con_ent == want["con_ent"]
            assert entstats.mutual_information(acc) == want["mi"]
        elapsed = time.monotonic() - t0
        assert elapsed < 10.0
        info["detail"] = f"32 filters x 1000 samples, exact equality, {elapsed:.1f}s"


# --------------------------------------------------------------------------
# Criterion 2: finite-difference gradient checks, every layer kind
# --------------------------------------------------------------------------

def test_criterion_2_gradient_checks():
    with criterion(2, "gradient checks vs central differences (rel err < 1e-4)") as info:
        t0 = time.monotonic()
        worst = 0.0
        cases = [
            (toy_layers(), (1, 10, 10), 5),
            (strided_layers(), (2, 10, 10), 4),
        ]
        for seed in (0, 1, 2):
            for layers, shape, classes in cases:
                net = engine.init_network(layers, shape, seed=seed)
                rng = np.random.default_rng(seed + 77)
                x = rng.normal(size=(4,) + shape)
                y = rng.integers(0, classes, size=4)
                _, grads, _ = engine.loss_and_grads(net, x, y)
                fd = oracles.fd_param_grads(net, x, y, h=1e-6)
                for i in range(len(net.layers)):
                    if grads[i] is None:
                        continue
                    for got, want in zip(grads[i], fd[i]):
                        rel = np.abs(got - want) / np.maximum(np.abs(want), 1e-4)
                        worst = max(worst, float(rel.max()))
                        assert rel.max() < 1e-4
        elapsed = time.monotonic() - t0
        assert elapsed < 60.0
        info["detail"] = f"3 seeds x 2 topologies, worst rel err {worst:.2e}, {elapsed:.1f}s"


# --------------------------------------------------------------------------
# Criterion 3: pruning exact-zero filters preserves function
# --------------------------------------------------------------------------

def test_criterion_3_function_preservation():
    with criterion(3, "zero-filter pruning preserves logits (<= 1e-9)") as info:
        layers = [
            engine.Conv2D(1, 8, 3),
            engine.Activation("relu"),
            engine.MaxPool2D(2),
            engine.Conv2D(8, 12, 3),
            engine.Activation("relu"),
            engine.Flatten(),
            engine.Dense(12 * 4 * 4, 10),
            engine.SoftmaxCrossEntropy(),
        ]
        net = engine.init_network(layers, (1, 14, 14), seed=33)
        zeroed = {0: [1, 4, 6], 1: [0, 5, 9, 11]}
        for li, filters in zeroed.items():
            idx = net.conv_layer_indices[li]
            for f in filters:
                net.weights[idx][f] = 0.0
                net.biases[idx][f] = 0.0
        x = np.random.default_rng(34).normal(size=(256, 1, 14, 14))
        before, _ = engine.forward(net, x)
        plan = PrunePlan.from_removals(zeroed, net.filter_counts(), "l1", "global", 0)
        after, _ = engine.forward(surgery.remove_filters(net, plan), x)
        diff = float(np.abs(after - before).max())
        assert diff <= 1e-9
        info["detail"] = f"7 zero filters removed, max logit shift {diff:.2e} over 256 inputs"


# --------------------------------------------------------------------------
# Criterion 4: entropy bounds and exact MI bijection invariance
# --------------------------------------------------------------------------

def test_criterion_4_entropy_bounds():
    with criterion(4, "entropy bounds + exact MI bin-bijection invariance (10k accumulators)") as info:
        t0 = time.monotonic()
        rng = np.random.default_rng(99)
        checked_bijections = 0
        for k in range(10_000):
            n_events = int(rng.integers(1, 40))
            act_bins = rng.integers(-5, 6, size=n_events)
            loss_bins = rng.integers(0, 8, size=n_events)
            acc = EntropyAccumulator(QuantSpec())
            for i, j in zip(act_bins, loss_bins):
                acc.add(int(i), int(j))
            con = entstats.conditional_entropy(acc).con_ent
            loss_h = entstats.loss_entropy(acc)
            mi = entstats.mutual_information(acc)
            assert 0.0 <= con <= loss_h + 1e-15
            assert mi >= -1e-12
            if k % 10 == 0:
                act_keys = sorted(acc.c_val)
                loss_keys = sorted({j for row in acc.c_bins.values() for j in row})
                amap = dict(zip(act_keys, rng.permutation(len(act_keys)) * 17 - 300))
                lmap = dict(zip(loss_keys, rng.permutation(len(loss_keys)) * 11 + 40))
                relabeled = EntropyAccumulator(QuantSpec())
                for i, row in acc.c_bins.items():
                    for j, c in row.items():
                        relabeled.add(int(amap[i]), int(lmap[j]), count=c)
                assert entstats.mutual_information(relabeled) == mi
                checked_bijections += 1
        elapsed = time.monotonic() - t0
        info["detail"] = f"10000 accumulators, {checked_bijections} exact bijection checks, {elapsed:.1f}s"


# --------------------------------------------------------------------------
# Criterion 5: noise sweep on the trained two-conv net
# --------------------------------------------------------------------------

def test_criterion_5_noise_sweep(desk_data, trained_mnist2conv):
    with criterion(5, "noise sweep: layer-1 act_ent Spearman >= 0.9 over 5 noise levels") as info:
        from scipy import stats

        t0 = time.monotonic()
        _, test_ds = desk_data
        net = trained_mnist2conv
        acc = engine.evaluate(net, test_ds, batch_size=256, workers=2)
        assert acc > 0.95  # the trained backbone is a real classifier

        stds = [0.0, 0.05, 0.1, 0.2, 0.4]
        layer1 = []
        for si, std in enumerate(stds):
            noised = add_gaussian_noise(test_ds, NoiseSpec(std, 100 + si))
            tf = capture(net, noised, batch_size=256, workers=2)
            accs = accumulators_from_trace(tf, QuantSpec())
            layer1.append(float(np.mean([entstats.activation_entropy(a) for a in accs[0]])))
        rho = float(stats.spearmanr(stds, layer1).statistic)
        elapsed = time.monotonic() - t0
        assert rho >= 0.9
        assert elapsed < 15 * 60
        info["detail"] = (
            f"test acc {acc:.3f}, act_ent {['%.2f' % v for v in layer1]}, "
            f"spearman {rho:.3f}, {elapsed:.0f}s"
        )


# --------------------------------------------------------------------------
# Criterion 6: desk-scale two-phase pruning
# --------------------------------------------------------------------------

def test_criterion_6_desk_scale_2pfpce(desk_data, trained_mini_vgg):
    with criterion(6, "desk-scale 2PFPCE: >=50% filters, <=2% drop, >=2x FLOPs, >=25% time") as info:
        t0 = time.monotonic()
        train_ds, test_ds = desk_data
        net = trained_mini_vgg
        baseline = engine.evaluate(net, test_ds, batch_size=128, workers=2)
        assert baseline >= 0.97

        cfg = desk_phase_config()
        pruned, log, report = driver.run_2pfpce(
            net, train_ds, cfg, seed=5, test=test_ds, bench_repeats=5
        )
        filters_before = report["before"]["filters"]
        filters_after = report["after"]["filters"]
        final_acc = report["after"]["accuracy"]
        flops_reduction = report["flops_reduction"]
        time_cut = 1.0 - report["after"]["bench_ms"] / report["before"]["bench_ms"]

        assert 1.0 - filters_after / filters_before >= 0.50
        assert final_acc >= baseline - 0.02  # threshold contract on the reported set
        assert flops_reduction >= 2.0
        assert time_cut >= 0.25
        filters = [e.filters_remaining for e in log]
        assert all(a > b for a, b in zip(filters, filters[1:]))
        elapsed = time.monotonic() - t0
        assert elapsed < 45 * 60
        info["detail"] = (
            f"filters {filters_before}->{filters_after} "
            f"(ratio {report['pruning_ratio']:.2f}), acc {baseline:.3f}->{final_acc:.3f}, "
            f"flops {flops_reduction:.1f}x, time -{time_cut:.0%}, {elapsed:.0f}s"
        )


# --------------------------------------------------------------------------
# Criterion 7: criteria comparison grid
# --------------------------------------------------------------------------

def test_criterion_7_criteria_comparison(desk_data, trained_mini_vgg):
    with criterion(7, "criteria comparison grid: produced, deterministic, within bounds") as info:
        t0 = time.monotonic()
        train_ds, test_ds = desk_data
        net = trained_mini_vgg
        names = ["cond_ent", "act_ent", "l1", "apoz"]
        ratios = [0.25, 0.5]
        cfg = desk_phase_config()

        result = driver.criteria_comparison(net, train_ds, names, ratios, cfg, seed=5, test=test_ds)
        again = driver.criteria_comparison(net, train_ds, names, ratios, cfg, seed=5, test=test_ds)
        assert result == again  # identical seeds, identical grid

        baseline = result["baseline_accuracy"]
        assert set(result["grid"]) == set(names)
        for name in names:
            assert set(result["grid"][name]) == set(ratios)
            for ratio in ratios:
                cell = result["grid"][name][ratio]
                assert baseline - 0.10 <= cell <= baseline

        # cond_ent superiority is reported, never gated (single-seed noise)
        mean_by_criterion = {
            name: float(np.mean([result["grid"][name][r] for r in ratios])) for name in names
        }
        ranking = sorted(mean_by_criterion, key=mean_by_criterion.get, reverse=True)
        elapsed = time.monotonic() - t0
        info["detail"] = (
            f"baseline {baseline:.3f}, grid "
            + "; ".join(
                f"{n}: " + "/".join(f"{result['grid'][n][r]:.3f}" for r in ratios) for n in names
            )
            + f", mean-accuracy ranking {ranking}, {elapsed:.0f}s"
        )


# --------------------------------------------------------------------------
# Criterion 8: format round-trips and error classes
# --------------------------------------------------------------------------

def test_criterion_8_format_roundtrips(tmp_path):
    with criterion(8, "checkpoint + trace round-trips bit-exact; corrupt fixtures classified") as info:
        net = engine.init_network(toy_layers(), (1, 10, 10), seed=3)
        net.freeze = {0: frozenset({1})}
        ckpt = tmp_path / "m.ckpt"
        engine.save_checkpoint(net, ckpt)
        engine.save_checkpoint(engine.load_checkpoint(ckpt), tmp_path / "m2.ckpt")
        assert ckpt.read_bytes() == (tmp_path / "m2.ckpt").read_bytes()

        blob = bytearray(ckpt.read_bytes())
        bad_magic = bytes(b"XXXX") + bytes(blob[4:])
        with pytest.raises(engine.BadMagicError):
            engine.deserialize_network(bad_magic)
        bad_version = bytes(blob[:4]) + (7).to_bytes(4, "little") + bytes(blob[8:])
        with pytest.raises(engine.BadVersionError):
            engine.deserialize_network(bad_version)
        with pytest.raises(engine.TruncatedCheckpointError):
            engine.deserialize_network(bytes(blob[:-20]))
        with pytest.raises(engine.LengthMismatchError):
            engine.deserialize_network(bytes(blob) + b"\x00" * 8)

        ds = data.synthetic_blobs(25, num_classes=5, image_size=10, seed=4)
        tf = capture(net, ds)
        tpath = tmp_path / "t.jsonl"
        write_trace(tf, tpath)
        back = read_trace(tpath)
        assert all(
            ra.loss == rb.loss and ra.activations == rb.activations
            for ra, rb in zip(tf.records, back.records)
        )
        from entprune.trace import TraceFormatError

        text = tpath.read_text()
        tpath.write_text(text[:-40])
        with pytest.raises(TraceFormatError):
            read_trace(tpath)
        info["detail"] = "checkpoint byte-identical; trace floats exact; 5 corruption classes raised"
