"""Neural pair ranker: loss values, analytic gradients, training, model IO."""

import math

import numpy as np
import pytest

from qrank.data import Candidate, Dataset, QueryGroup
from qrank.pairs import dataset_pairs, pairwise_accuracy
from qrank.ranknet import (
    NeuralNet,
    forward,
    load_ranknet_model,
    pair_gradients,
    pair_loss,
    save_ranknet_model,
    train_ranknet,
)


def oracle_forward(net, x):
    """Loop-based scorer, no numpy linear algebra."""
    total = net.b2
    for j in range(net.hidden):
        z = net.b1[j]
        for k in range(net.dim):
            z += net.w1[j][k] * x[k]
        total += net.w2[j] / (1.0 + math.exp(-z))
    return total


def random_net(rng, dim, hidden):
    return NeuralNet(
        w1=rng.uniform(-1.0, 1.0, size=(hidden, dim)),
        b1=rng.uniform(-0.5, 0.5, size=hidden),
        w2=rng.uniform(-1.0, 1.0, size=hidden),
        b2=float(rng.uniform(-0.5, 0.5)),
    )


def rankable_ds(n_groups=8, n=6, d=3, seed=5):
    """Top-2 candidates by a hidden linear utility get label 1."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=d)
    groups = []
    for q in range(1, n_groups + 1):
        x = rng.uniform(-1.0, 1.0, size=(n, d))
        order = np.argsort(-(x @ w), kind="stable")
        labels = np.zeros(n, dtype=int)
        labels[order[:2]] = 1
        groups.append(
            QueryGroup(q, tuple(Candidate(int(labels[i]), q, x[i]) for i in range(n)))
        )
    return Dataset(tuple(groups), d)


class TestPairLoss:
    def test_zero_difference_is_log_two(self):
        # zero weights give every candidate the same score
        net = NeuralNet(np.zeros((2, 3)), np.zeros(2), np.zeros(2), 0.0)
        loss = pair_loss(net, [1.0, 2.0, 3.0], [-1.0, 0.0, 4.0])
        assert loss == pytest.approx(0.6931471805599453, abs=1e-15)

    def test_frozen_large_negative_difference(self):
        # sigmoid(0)=0.5 and sigmoid(40)=1.0 exactly, so the score
        # difference is 20*(0.5-1.0) = -10 with no rounding
        net = NeuralNet(np.array([[1.0]]), np.zeros(1), np.array([20.0]), 0.0)
        assert net.score([0.0]) - net.score([40.0]) == -10.0
        loss = pair_loss(net, [0.0], [40.0])
        assert loss == pytest.approx(10.000045398899218, abs=1e-12)

    def test_confident_correct_pair_is_cheap(self):
        net = NeuralNet(np.array([[1.0]]), np.zeros(1), np.array([20.0]), 0.0)
        assert pair_loss(net, [40.0], [0.0]) < 1e-4

    def test_swap_with_complement_target_matches(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            net = random_net(rng, 4, 3)
            xu = rng.uniform(-2.0, 2.0, size=4)
            xv = rng.uniform(-2.0, 2.0, size=4)
            t = float(rng.uniform(0.0, 1.0))
            assert pair_loss(net, xu, xv, t) == pair_loss(net, xv, xu, 1.0 - t)

    def test_target_outside_unit_interval_rejected(self):
        net = random_net(np.random.default_rng(0), 2, 2)
        with pytest.raises(ValueError, match="target probability"):
            pair_loss(net, [0.0, 0.0], [1.0, 1.0], target=1.5)

    def test_loss_is_nonnegative(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            net = random_net(rng, 3, 4)
            xu = rng.uniform(-3.0, 3.0, size=3)
            xv = rng.uniform(-3.0, 3.0, size=3)
            assert pair_loss(net, xu, xv, float(rng.uniform(0, 1))) >= 0.0


class TestForward:
    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            net = random_net(rng, 5, 4)
            x = rng.uniform(-2.0, 2.0, size=5)
            assert forward(net, x) == pytest.approx(oracle_forward(net, x), rel=1e-12)

    def test_score_matrix_matches_scalar_scores(self):
        rng = np.random.default_rng(4)
        net = random_net(rng, 4, 6)
        x = rng.uniform(-1.0, 1.0, size=(20, 4))
        batch = net.score_matrix(x)
        singles = np.array([net.score(row) for row in x])
        assert np.allclose(batch, singles, rtol=0, atol=1e-12)

    def test_dimension_mismatch_rejected(self):
        net = random_net(np.random.default_rng(0), 3, 2)
        with pytest.raises(ValueError, match="expected dim 3"):
            net.score([1.0, 2.0])


def central_difference(net, xu, xv, target, setter, step=1e-5):
    setter(+step)
    hi = pair_loss(net, xu, xv, target)
    setter(-2.0 * step)
    lo = pair_loss(net, xu, xv, target)
    setter(+step)
    return (hi - lo) / (2.0 * step)


def assert_close_grad(analytic, numeric):
    scale = max(abs(analytic), abs(numeric))
    if scale < 1e-7:
        assert abs(analytic - numeric) < 1e-8
    else:
        assert abs(analytic - numeric) / scale < 1e-4


class TestGradients:
    def test_matches_central_differences_everywhere(self):
        # 120 random (net, pair) draws, every coordinate checked
        checked = 0
        for draw in range(120):
            rng = np.random.default_rng(9000 + draw)
            dim = int(rng.integers(2, 6))
            hidden = int(rng.integers(1, 5))
            net = random_net(rng, dim, hidden)
            xu = rng.uniform(-2.0, 2.0, size=dim)
            xv = rng.uniform(-2.0, 2.0, size=dim)
            target = float(rng.choice([0.0, 0.3, 0.5, 1.0]))
            dw1, db1, dw2, db2 = pair_gradients(net, xu, xv, target)

            for j in range(hidden):
                for k in range(dim):
                    def bump(eps, j=j, k=k):
                        net.w1[j, k] += eps
                    assert_close_grad(dw1[j, k], central_difference(net, xu, xv, target, bump))
                    checked += 1
            for j in range(hidden):
                def bump(eps, j=j):
                    net.b1[j] += eps
                assert_close_grad(db1[j], central_difference(net, xu, xv, target, bump))
                checked += 1
            for j in range(hidden):
                def bump(eps, j=j):
                    net.w2[j] += eps
                assert_close_grad(dw2[j], central_difference(net, xu, xv, target, bump))
                checked += 1
        assert checked > 1000

    def test_output_bias_gradient_is_exactly_zero(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            net = random_net(rng, 3, 3)
            xu = rng.uniform(-2.0, 2.0, size=3)
            xv = rng.uniform(-2.0, 2.0, size=3)
            *_, db2 = pair_gradients(net, xu, xv)
            assert db2 == 0.0

            def bump(eps):
                net.b2 += eps
            numeric = central_difference(net, xu, xv, 1.0, bump)
            assert abs(numeric) < 1e-9

    def test_single_step_lowers_pair_loss(self):
        rng = np.random.default_rng(22)
        for _ in range(10):
            net = random_net(rng, 4, 3)
            xu = rng.uniform(-2.0, 2.0, size=4)
            xv = rng.uniform(-2.0, 2.0, size=4)
            before = pair_loss(net, xu, xv)
            dw1, db1, dw2, _ = pair_gradients(net, xu, xv)
            lr = 1e-3
            net.w1 -= lr * dw1
            net.b1 -= lr * db1
            net.w2 -= lr * dw2
            assert pair_loss(net, xu, xv) <= before


class TestTraining:
    def test_zero_learning_rate_leaves_init_untouched(self):
        ds = rankable_ds()
        init = train_ranknet(ds, epochs=0, lr=0.0, seed=7)
        idle = train_ranknet(ds, epochs=5, lr=0.0, seed=7)
        assert np.array_equal(init.w1, idle.w1)
        assert np.array_equal(init.b1, idle.b1)
        assert np.array_equal(init.w2, idle.w2)
        assert init.b2 == idle.b2

    def test_same_seed_reproduces_weights_and_trace(self):
        ds = rankable_ds()
        a = train_ranknet(ds, epochs=4, lr=0.01, seed=3)
        b = train_ranknet(ds, epochs=4, lr=0.01, seed=3)
        assert np.array_equal(a.w1, b.w1)
        assert np.array_equal(a.w2, b.w2)
        assert a.loss_trace == b.loss_trace

    def test_different_seeds_differ(self):
        ds = rankable_ds()
        a = train_ranknet(ds, epochs=2, lr=0.01, seed=1)
        b = train_ranknet(ds, epochs=2, lr=0.01, seed=2)
        assert not np.array_equal(a.w1, b.w1)

    def test_loss_trace_falls_and_ranking_is_learned(self):
        ds = rankable_ds(n_groups=10)
        net = train_ranknet(ds, epochs=30, lr=0.05, seed=0, hidden=10)
        assert len(net.loss_trace) == 30
        assert net.loss_trace[-1] < net.loss_trace[0]
        acc = pairwise_accuracy(net.score_matrix(ds.matrix()), dataset_pairs(ds))
        assert acc >= 0.9

    def test_trace_length_matches_epochs(self):
        ds = rankable_ds()
        net = train_ranknet(ds, epochs=3, lr=1e-4, seed=0)
        assert len(net.loss_trace) == 3

    def test_bad_arguments_rejected(self):
        ds = rankable_ds()
        with pytest.raises(ValueError, match="epochs"):
            train_ranknet(ds, epochs=-1)
        with pytest.raises(ValueError, match="hidden"):
            train_ranknet(ds, hidden=0)

    def test_all_tied_labels_rejected(self):
        g = QueryGroup(1, tuple(Candidate(1, 1, np.array([float(i)])) for i in range(4)))
        with pytest.raises(ValueError, match="no discordant pairs"):
            train_ranknet(Dataset((g,), 1))


class TestModelIO:
    def test_round_trip_is_byte_identical(self, tmp_path):
        ds = rankable_ds()
        net = train_ranknet(ds, epochs=3, lr=0.01, seed=9, hidden=4)
        first = tmp_path / "net.model"
        second = tmp_path / "net2.model"
        save_ranknet_model(net, first)
        loaded = load_ranknet_model(first)
        save_ranknet_model(loaded, second)
        assert first.read_bytes() == second.read_bytes()
        x = ds.matrix()
        assert np.array_equal(net.score_matrix(x), loaded.score_matrix(x))

    def test_header_and_row_layout(self, tmp_path):
        net = NeuralNet(
            np.array([[1.0, -0.5], [0.25, 2.0]]),
            np.array([0.0, 1.5]),
            np.array([-1.0, 3.0]),
            0.0,
        )
        path = tmp_path / "net.model"
        save_ranknet_model(net, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "ranknet dim=2 hidden=2"
        assert lines[1] == "w1 1 -0.5"
        assert lines[2] == "w1 0.25 2"
        assert lines[3] == "b1 0 1.5"
        assert lines[4] == "w2 -1 3"
        assert lines[5] == "b2 0"

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "bad.model"
        path.write_text("ranksvm linear c=1 dim=2\nw 1 2\n")
        with pytest.raises(ValueError, match="not a ranknet model"):
            load_ranknet_model(path)

    def test_truncated_file_rejected(self, tmp_path):
        net = random_net(np.random.default_rng(0), 2, 3)
        path = tmp_path / "net.model"
        save_ranknet_model(net, path)
        clipped = path.read_text().splitlines()[:-1]
        path.write_text("\n".join(clipped) + "\n")
        with pytest.raises(ValueError, match="weight lines"):
            load_ranknet_model(path)
