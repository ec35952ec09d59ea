"""Trace capture semantics and the JSONL trace format."""

import json

import numpy as np
import pytest

from entprune import data, engine, trace
from entprune.entstats import QuantSpec


def small_dataset(n=20, seed=0):
    return data.synthetic_blobs(n, num_classes=5, image_size=10, seed=seed)


@pytest.fixture
def net():
    from conftest import toy_layers

    return engine.init_network(toy_layers(), (1, 10, 10), seed=3)


class TestCapture:
    def test_one_record_per_sample(self, net):
        ds = small_dataset(17)
        tf = trace.capture(net, ds)
        assert len(tf.records) == 17
        assert [r.sample_id for r in tf.records] == list(range(17))
        assert tf.layer_sizes == [2, 3]
        assert tf.reduction == "mean"

    def test_zero_weight_net_zero_scalars(self, net):
        for i in range(len(net.layers)):
            if net.weights[i] is not None:
                net.weights[i][:] = 0.0
                net.biases[i][:] = 0.0
        tf = trace.capture(net, small_dataset(5))
        for rec in tf.records:
            assert all(v == 0.0 for vec in rec.activations for v in vec)

    def test_constant_map_mean_is_value(self):
        """A constant post-activation map reduces to exactly that constant."""
        layers = [
            engine.Conv2D(1, 1, 1),
            engine.Activation("relu"),
            engine.Flatten(),
            engine.Dense(16, 2),
            engine.SoftmaxCrossEntropy(),
        ]
        net = engine.init_network(layers, (1, 4, 4), seed=0)
        net.weights[0][:] = 0.0
        net.biases[0][:] = 0.5
        ds = data.Dataset(
            np.random.default_rng(0).uniform(size=(6, 1, 4, 4)),
            np.zeros(6, dtype=np.int64),
            "const",
        )
        tf = trace.capture(net, ds)
        for rec in tf.records:
            assert rec.activations[0][0] == 0.5

    def test_batch_size_independent(self, net):
        ds = small_dataset(23)
        a = trace.capture(net, ds, batch_size=23)
        b = trace.capture(net, ds, batch_size=4)
        for ra, rb in zip(a.records, b.records):
            assert ra.sample_id == rb.sample_id
            assert ra.activations == rb.activations
            np.testing.assert_allclose(ra.loss, rb.loss, rtol=0, atol=1e-12)

    def test_workers_equivalent(self, net):
        ds = small_dataset(30)
        a = trace.capture(net, ds, batch_size=7, workers=1)
        b = trace.capture(net, ds, batch_size=7, workers=4)
        assert [r.activations for r in a.records] == [r.activations for r in b.records]

    def test_c_total_equals_dataset_size(self, net):
        ds = small_dataset(19)
        tf = trace.capture(net, ds)
        accs = trace.accumulators_from_trace(tf, QuantSpec())
        for layer in accs:
            for acc in layer:
                assert acc.c_total == 19

    def test_max_reduction(self, net):
        ds = small_dataset(6)
        tf = trace.capture(net, ds, reduction="max")
        assert tf.reduction == "max"
        _, acts = engine.forward(net, ds.images)
        np.testing.assert_allclose(
            [r.activations[0] for r in tf.records], acts[0].max(axis=(2, 3)), atol=1e-15
        )


class TestTraceFormat:
    def test_roundtrip_bit_exact(self, net, tmp_path):
        tf = trace.capture(net, small_dataset(9))
        p = tmp_path / "t.jsonl"
        trace.write_trace(tf, p)
        back = trace.read_trace(p)
        assert back.model_hash == tf.model_hash
        assert back.layer_sizes == tf.layer_sizes
        for ra, rb in zip(tf.records, back.records):
            assert ra.loss == rb.loss  # bit-exact via shortest round-trip decimals
            assert ra.activations == rb.activations

    def test_truncated_file(self, net, tmp_path):
        tf = trace.capture(net, small_dataset(4))
        p = tmp_path / "t.jsonl"
        trace.write_trace(tf, p)
        text = p.read_text()
        p.write_text(text[: len(text) - 30])  # cut into the last record
        with pytest.raises(trace.TraceFormatError):
            trace.read_trace(p)

    def test_wrong_vector_length_names_layer(self, net, tmp_path):
        tf = trace.capture(net, small_dataset(3))
        p = tmp_path / "t.jsonl"
        trace.write_trace(tf, p)
        lines = p.read_text().splitlines()
        rec = json.loads(lines[2])
        rec["activations"][1] = rec["activations"][1][:-1]
        lines[2] = json.dumps(rec)
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(trace.TraceFormatError, match="layer 1"):
            trace.read_trace(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.jsonl"
        p.write_text("")
        with pytest.raises(trace.TraceFormatError):
            trace.read_trace(p)

    def test_missing_header_field(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text('{"model_hash": "x"}\n')
        with pytest.raises(trace.TraceFormatError, match="header missing"):
            trace.read_trace(p)


class TestRestrict:
    def test_drops_and_reindexes(self, net):
        tf = trace.capture(net, small_dataset(5))
        out = trace.trace_restrict(tf, {1: [0, 2]})
        assert out.layer_sizes == [2, 1]
        for orig, red in zip(tf.records, out.records):
            assert red.activations[0] == orig.activations[0]
            assert red.activations[1] == [orig.activations[1][1]]

    def test_out_of_range_rejected(self, net):
        tf = trace.capture(net, small_dataset(3))
        with pytest.raises(trace.TraceFormatError):
            trace.trace_restrict(tf, {0: [5]})
