import math

import numpy as np
import pytest

from salera.nets import (
    DenseNet,
    SnapshotFormatError,
    loss_and_error,
    m0_net,
    m2_net,
    softmax,
)
from salera.vectors import make_rng


class TestConstruction:
    def test_layer_partition_layout(self):
        net = DenseNet((4, 3, 2))
        segs = list(net.partition)
        assert [seg.name for seg in segs] == ["layer0", "layer1"]
        assert [seg.length for seg in segs] == [4 * 3 + 3, 3 * 2 + 2]
        assert net.n_params == 15 + 8
        assert net.n_layers == 2
        assert net.n_classes == 2

    def test_registers(self):
        assert m0_net().sizes == (784, 10)
        assert m0_net().n_params == 784 * 10 + 10
        assert m2_net().sizes == (784, 500, 300, 10)

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            DenseNet((5,))
        with pytest.raises(ValueError):
            DenseNet((5, 0, 2))


class TestInit:
    def test_fan_balanced_bounds_and_zero_bias(self):
        net = DenseNet((30, 20, 5))
        theta = net.init_params(make_rng(0))
        w0 = theta[: 30 * 20]
        b0 = theta[30 * 20 : 30 * 20 + 20]
        bound0 = math.sqrt(6.0 / (30 + 20))
        assert np.all(np.abs(w0) <= bound0)
        assert np.array_equal(b0, np.zeros(20))
        seg1 = list(net.partition)[1]
        w1 = theta[seg1.start : seg1.start + 20 * 5]
        b1 = theta[seg1.start + 20 * 5 : seg1.stop]
        assert np.all(np.abs(w1) <= math.sqrt(6.0 / (20 + 5)))
        assert np.array_equal(b1, np.zeros(5))

    def test_weight_variance_matches_uniform_law(self):
        # Var(U(-a, a)) = a^2/3 = 2/(fan_in + fan_out); check on a big block
        net = DenseNet((500, 300))
        theta = net.init_params(make_rng(3))
        weights = theta[: 500 * 300]
        target = 2.0 / (500 + 300)
        assert abs(weights.var() / target - 1.0) <= 0.10

    def test_deterministic_given_seed(self):
        net = DenseNet((6, 4, 3))
        assert np.array_equal(net.init_params(make_rng(9)), net.init_params(make_rng(9)))


class TestForward:
    def test_zero_parameters_give_zero_logits(self):
        net = DenseNet((5, 8, 3))
        logits, _ = net.forward(np.zeros(net.n_params), np.ones((4, 5)))
        assert np.array_equal(logits, np.zeros((4, 3)))

    def test_single_layer_is_affine(self):
        net = DenseNet((2, 2))
        theta = np.array([0.2, -0.1, 0.4, 0.3, 0.05, -0.05])  # row-major W then bias
        x = np.array([[1.0, 2.0]])
        logits, _ = net.forward(theta, x)
        expected = np.array([[0.2 + 2 * 0.4 + 0.05, -0.1 + 2 * 0.3 - 0.05]])
        assert np.allclose(logits, expected, rtol=1e-15)

    def test_hidden_layers_clip_at_zero(self):
        # drive every hidden unit negative: the block after it sees zeros,
        # so the logits collapse to the output bias
        net = DenseNet((3, 4, 2))
        theta = np.zeros(net.n_params)
        views = net._views(theta)
        views[0][0][...] = -1.0  # hidden weights
        views[0][1][...] = -0.5  # hidden bias
        views[1][0][...] = 7.0  # output weights (silenced by the ReLU)
        views[1][1][...] = np.array([0.25, -0.75])
        logits, cache = net.forward(theta, np.abs(make_rng(1).normal(size=(6, 3))))
        assert np.array_equal(cache.activations[1], np.zeros((6, 4)))
        assert np.allclose(logits, np.tile([0.25, -0.75], (6, 1)), rtol=1e-15)

    def test_rejects_wrong_input_width(self):
        net = DenseNet((4, 2))
        with pytest.raises(ValueError):
            net.forward(np.zeros(net.n_params), np.zeros((3, 5)))
        with pytest.raises(ValueError):
            net.forward(np.zeros(net.n_params), np.zeros(4))


class TestBackward:
    def test_single_example_closed_form(self):
        # x = e_0 puts softmax - onehot in weight row 0 and in the bias
        net = DenseNet((2, 2))
        theta = np.array([0.2, -0.1, 0.0, 0.0, 0.0, 0.0])
        x = np.array([[1.0, 0.0]])
        logits, cache = net.forward(theta, x)
        grad = net.backward(cache, np.array([0]))
        s = np.exp([0.2, -0.1]) / np.exp([0.2, -0.1]).sum()
        delta = s - np.array([1.0, 0.0])
        assert np.allclose(grad[0:2], delta, rtol=1e-12)  # weight row for x_0
        assert np.allclose(grad[2:4], np.zeros(2), atol=0.0)  # silent input
        assert np.allclose(grad[4:6], delta, rtol=1e-12)  # bias

    def test_zero_inputs_leave_only_bias_gradient(self):
        net = DenseNet((3, 4))
        theta = make_rng(2).normal(size=net.n_params)
        logits, cache = net.forward(theta, np.zeros((5, 3)))
        grad = net.backward(cache, np.array([1, 2, 0, 3, 1]))
        assert np.array_equal(grad[: 3 * 4], np.zeros(12))
        probs = softmax(logits)
        onehot = np.zeros((5, 4))
        onehot[np.arange(5), [1, 2, 0, 3, 1]] = 1.0
        assert np.allclose(grad[12:], (probs - onehot).mean(axis=0), rtol=1e-12)

    def test_relu_gate_blocks_dead_units(self):
        net = DenseNet((3, 4, 2))
        theta = np.zeros(net.n_params)
        views = net._views(theta)
        views[0][0][...] = -2.0
        views[0][1][...] = -1.0  # all hidden units off for positive inputs
        views[1][0][...] = make_rng(5).normal(size=(4, 2))
        x = np.abs(make_rng(6).normal(size=(7, 3))) + 0.1
        _, cache = net.forward(theta, x)
        grad = net.backward(cache, np.zeros(7, dtype=int))
        seg0 = list(net.partition)[0]
        assert np.array_equal(grad[seg0.slice], np.zeros(seg0.length))

    def test_mean_reduction_makes_duplicates_equivalent(self):
        net = DenseNet((4, 5, 3))
        theta = net.init_params(make_rng(8))
        x = make_rng(9).normal(size=(1, 4))
        single = net.backward(net.forward(theta, x)[1], np.array([2]))
        triple = net.backward(
            net.forward(theta, np.repeat(x, 3, axis=0))[1], np.array([2, 2, 2])
        )
        assert np.allclose(single, triple, rtol=1e-12)

    def test_batch_order_invariance(self):
        net = DenseNet((4, 5, 3))
        theta = net.init_params(make_rng(10))
        x = make_rng(11).normal(size=(6, 4))
        y = np.array([0, 2, 1, 1, 0, 2])
        perm = np.array([5, 2, 0, 4, 1, 3])
        g1 = net.backward(net.forward(theta, x)[1], y)
        g2 = net.backward(net.forward(theta, x[perm])[1], y[perm])
        assert np.allclose(g1, g2, rtol=1e-12)

    def test_rejects_label_batch_mismatch(self):
        net = DenseNet((2, 2))
        _, cache = net.forward(np.zeros(net.n_params), np.zeros((3, 2)))
        with pytest.raises(ValueError):
            net.backward(cache, np.array([0, 1]))


class TestSoftmax:
    def test_rows_sum_to_one(self):
        z = make_rng(1).normal(size=(5, 7))
        assert np.allclose(softmax(z).sum(axis=1), np.ones(5), rtol=1e-12)

    def test_shift_invariance(self):
        z = make_rng(2).normal(size=(3, 4))
        assert np.allclose(softmax(z), softmax(z + 123.0), rtol=1e-12)

    def test_survives_huge_logits(self):
        out = softmax(np.array([[1000.0, 0.0], [-1000.0, 0.0]]))
        assert np.all(np.isfinite(out))
        assert out[0, 0] == pytest.approx(1.0)
        assert out[1, 0] == pytest.approx(0.0, abs=1e-300)


class TestLossAndError:
    def test_uniform_logits_give_log_n_classes(self):
        logits = np.zeros((6, 10))
        labels = np.arange(6)
        loss, error = loss_and_error(logits, labels)
        assert loss == pytest.approx(math.log(10.0), rel=1e-15)
        # argmax ties resolve to class 0
        assert error == pytest.approx(5.0 / 6.0)

    def test_pinned_single_row_value(self):
        # one unit logit among ten zeros, true class on the unit:
        # loss = log(e + 9) - 1
        logits = np.zeros((1, 10))
        logits[0, 0] = 1.0
        loss, error = loss_and_error(logits, np.array([0]))
        assert loss == pytest.approx(math.log(math.e + 9.0) - 1.0, rel=1e-12)
        assert error == 0.0

    def test_extreme_logits_stay_finite(self):
        logits = np.array([[1000.0, -1000.0], [-1000.0, 1000.0]])
        loss, error = loss_and_error(logits, np.array([0, 0]))
        assert math.isfinite(loss)
        assert error == 0.5

    def test_error_counts_mispredictions(self):
        logits = np.array([[2.0, 1.0], [0.0, 3.0], [5.0, 4.0], [1.0, 2.0]])
        _, error = loss_and_error(logits, np.array([0, 0, 1, 1]))
        assert error == 0.5


class TestSnapshot:
    def test_round_trip_is_bit_exact(self, tmp_path):
        net = DenseNet((7, 5, 4))
        theta = net.init_params(make_rng(21))
        path = tmp_path / "net.bin"
        net.save(theta, path)
        loaded_net, loaded_theta = DenseNet.load(path)
        assert loaded_net.sizes == net.sizes
        assert np.array_equal(loaded_theta, theta)

    def test_save_rejects_wrong_length(self, tmp_path):
        net = DenseNet((3, 2))
        with pytest.raises(ValueError):
            net.save(np.zeros(net.n_params + 1), tmp_path / "bad.bin")

    def test_load_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + bytes(100))
        with pytest.raises(SnapshotFormatError, match="magic"):
            DenseNet.load(path)

    def test_load_rejects_truncated_header(self, tmp_path):
        path = tmp_path / "short.bin"
        path.write_bytes(b"SALR")
        with pytest.raises(SnapshotFormatError, match="truncated"):
            DenseNet.load(path)

    def test_load_rejects_unsupported_version(self, tmp_path):
        import struct

        path = tmp_path / "v9.bin"
        path.write_bytes(struct.pack("<4sII", b"SALR", 9, 2) + struct.pack("<2I", 2, 2))
        with pytest.raises(SnapshotFormatError, match="version"):
            DenseNet.load(path)

    def test_load_rejects_truncated_parameters(self, tmp_path):
        net = DenseNet((3, 2))
        path = tmp_path / "cut.bin"
        net.save(np.zeros(net.n_params), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])  # drop one float64
        with pytest.raises(SnapshotFormatError, match="expected"):
            DenseNet.load(path)
