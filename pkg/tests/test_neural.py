import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimest.errors import DegenerateData, ShapeMismatch
from mimest.neural import (
    AdamState,
    LabeledSource,
    MlpClassifier,
    TrainSchedule,
    adam_step,
    leaky_relu,
    leaky_relu_grad,
    softmax,
    softmax_xent,
    softmax_xent_backward,
    train,
)

from oracles import random_net, xent_gradcheck


def test_zero_net_gives_zero_logits(rng):
    net = MlpClassifier.init(3, 4, 8, 2, rng=rng, zero=True)
    assert np.array_equal(net.forward(rng.normal(size=(5, 3))), np.zeros((5, 4)))


def test_default_init_has_zero_head(rng):
    net = MlpClassifier.init(3, 4, 8, 2, rng=rng)
    assert np.array_equal(net.forward(rng.normal(size=(5, 3))), np.zeros((5, 4)))
    assert np.all(net.weights[0] != 0)


def test_linear_identity_net():
    net = MlpClassifier([np.eye(3)], [np.zeros(3)], skip=True)
    x = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(net.forward(x), x)


def test_forward_deterministic_and_shape_checked(rng):
    net = random_net(rng, 4, 2, 8, 2)
    x = rng.normal(size=(7, 4))
    assert np.array_equal(net.forward(x), net.forward(x))
    with pytest.raises(ShapeMismatch):
        net.forward(np.zeros((3, 5)))


def test_he_init_scale():
    net = MlpClassifier.init(200, 1, 400, 1, rng=np.random.default_rng(0))
    assert np.std(net.weights[0]) == pytest.approx(math.sqrt(2 / (1.0001 * 200)), rel=0.02)


def test_uniform_logits_loss_is_ln4():
    loss, _ = softmax_xent(np.zeros((8, 4)), np.arange(8) % 4)
    assert loss == pytest.approx(math.log(4), abs=1e-15)
    assert loss == pytest.approx(1.3862944, abs=1e-7)


def test_confident_logits_loss_near_zero():
    logits = np.zeros((4, 4))
    logits[np.arange(4), np.arange(4)] = 30.0
    assert softmax_xent(logits, np.arange(4))[0] < 1e-12


def test_xent_label_validation():
    with pytest.raises(ShapeMismatch):
        softmax_xent(np.zeros((3, 2)), np.zeros(4, dtype=int))
    with pytest.raises(ValueError):
        softmax_xent(np.zeros((3, 2)), np.array([0, 1, 2]))


@settings(max_examples=30)
@given(
    st.integers(1, 8),
    st.integers(1, 5),
    st.integers(1, 16),
    st.integers(0, 2),
    st.booleans(),
    st.integers(0, 2**32 - 1),
)
def test_gradient_matches_finite_differences(din, k, width, depth, skip, seed):
    r = np.random.default_rng(seed)
    net = random_net(r, din, k, width, depth, skip)
    x = r.normal(size=(6, din))
    assert xent_gradcheck(net, x, r.integers(0, k, size=6)) < 1e-4


def test_gradient_with_standardization(rng):
    net = random_net(rng, 3, 4, 6, 2)
    net.input_shift = rng.normal(size=3)
    net.input_scale = rng.uniform(0.5, 2, size=3)
    assert xent_gradcheck(net, rng.normal(size=(5, 3)), rng.integers(0, 4, 5)) < 1e-4


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=10), st.integers(1, 5))
def test_softmax_rows_sum_to_one(vals, rows):
    p = softmax(np.tile(np.array(vals), (rows, 1)))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("z", [-2.0, -1e-3, 1e-3, 3.0])
def test_leaky_relu_consistency(z):
    slope = 0.01
    h = 1e-7
    fd = (leaky_relu(np.array(z + h), slope) - leaky_relu(np.array(z - h), slope)) / (2 * h)
    assert leaky_relu_grad(np.array(z), slope) == pytest.approx(fd, rel=1e-6)
    assert leaky_relu(np.array(z), slope) == (z if z > 0 else slope * z)


def test_adam_zero_grad_no_change():
    p = [np.array([1.0, -2.0])]
    out, st_ = adam_step(p, [np.zeros(2)], AdamState(weight_decay=0.0))
    assert np.array_equal(out[0], p[0])
    assert st_.t == 1


def test_adam_first_step_hand_value():
    # m = 0.1, v = 0.001; bias-corrected both are 1, step = lr * 1 / (1 + eps)
    out, _ = adam_step([np.array([0.0])], [np.array([1.0])], AdamState(lr=5e-4, weight_decay=0.0))
    assert out[0][0] == pytest.approx(-5e-4 / (1 + 1e-8), rel=1e-12)


def test_adam_decoupled_decay_after_step():
    lr, wd = 5e-4, 0.1
    out, _ = adam_step([np.array([2.0])], [np.array([1.0])], AdamState(lr=lr, weight_decay=wd))
    stepped = 2.0 - lr / (1 + 1e-8)
    assert out[0][0] == pytest.approx(stepped * (1 - lr * wd), rel=1e-12)


def test_adam_is_pure():
    p, g, s = [np.array([1.0, 2.0])], [np.array([0.3, -0.1])], AdamState()
    a, sa = adam_step(p, g, s)
    b, sb = adam_step(p, g, s)
    assert np.array_equal(a[0], b[0]) and sa.t == sb.t == 1 and s.t == 0
    assert np.array_equal(p[0], [1.0, 2.0])


def test_adam_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        adam_step([np.zeros(2)], [np.zeros(3)], AdamState())


def _two_blobs(rng, n=1000):
    x = np.vstack([rng.normal(-3, 1, size=(n, 2)), rng.normal(3, 1, size=(n, 2))])
    return x, np.repeat([0, 1], n)


def test_train_separable_blobs():
    r = np.random.default_rng(0)
    x, y = _two_blobs(r)
    net = MlpClassifier.init(2, 2, 16, 2, rng=r)
    res = train(net, LabeledSource(x, y, 2), TrainSchedule(batch_size=64, max_epochs=50), r)
    xt, yt = _two_blobs(np.random.default_rng(1))
    acc = np.mean(res.net.forward(xt).argmax(axis=1) == yt)
    assert acc > 0.99


def test_train_indistinguishable_classes_give_zero_log_ratios():
    r = np.random.default_rng(3)
    x = r.normal(size=(4000, 2))
    y = np.repeat(np.arange(4), 1000)
    net = MlpClassifier.init(2, 4, 16, 2, rng=r)
    res = train(net, LabeledSource(x, y, 4), TrainSchedule(batch_size=64, max_epochs=30), r, AdamState(lr=1e-3))
    logits = res.net.forward(np.random.default_rng(4).normal(size=(2000, 2)))
    gaps = logits - logits[:, :1]
    assert np.max(np.abs(gaps.mean(axis=0))) < 0.1


def test_train_deterministic_and_best_snapshot():
    def run():
        r = np.random.default_rng(7)
        x, y = _two_blobs(r, 200)
        net = MlpClassifier.init(2, 2, 8, 1, rng=r)
        return train(net, LabeledSource(x, y, 2), TrainSchedule(batch_size=32, max_epochs=15, patience=3), r)

    a, b = run(), run()
    for p, q in zip(a.net.params(), b.net.params()):
        assert np.array_equal(p, q)
    best = [h["best_val_loss"] for h in a.history]
    assert all(x >= y for x, y in zip(best, best[1:]))
    vals = [h["val_loss"] for h in a.history]
    assert a.best_epoch == int(np.argmin(vals))


def test_train_degenerate_class():
    with pytest.raises(DegenerateData):
        LabeledSource(np.zeros((4, 1)), np.array([0, 0, 2, 2]), 3)


def test_schedule_validation():
    with pytest.raises(ValueError):
        TrainSchedule(batch_size=2).validate(4)
    with pytest.raises(ValueError):
        TrainSchedule(val_fraction=0.7).validate()


def test_snapshot_round_trip_exact(tmp_path, rng):
    net = random_net(rng, 3, 4, 5, 2)
    net.input_shift = rng.normal(size=3)
    net.input_scale = rng.uniform(1, 2, size=3)
    net.save(tmp_path / "net.json")
    back = MlpClassifier.load(tmp_path / "net.json")
    for p, q in zip(net.params(), back.params()):
        assert np.array_equal(p, q)
    assert np.array_equal(back.input_shift, net.input_shift)
    x = rng.normal(size=(4, 3))
    assert np.array_equal(net.forward(x), back.forward(x))


def test_softmax_xent_backward_returns_params_order(rng):
    net = random_net(rng, 2, 3, 4, 1)
    loss, grads = softmax_xent_backward(net, rng.normal(size=(5, 2)), np.array([0, 1, 2, 0, 1]))
    assert [g.shape for g in grads] == [p.shape for p in net.params()]
    assert math.isfinite(loss)
