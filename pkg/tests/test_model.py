from __future__ import annotations

import numpy as np
import pytest

from feddct.core import derive_stream
from feddct.model import (
    EmptyAggregation, ModelState, NonFinite, aggregate, evaluate, fedasync_merge, init_model, load_checkpoint,
    loss_and_grad, num_params, predict, save_checkpoint, staleness_weight, train_client,
)


def rand_model(rng, k=10, d=32):
    return ModelState(rng.normal(size=num_params(k, d)), k, d)


def test_init_shape_and_range():
    a = init_model(10, 32, derive_stream(42, "model_init"))
    b = init_model(10, 32, derive_stream(42, "model_init"))
    assert len(a.params) == 330
    assert np.array_equal(a.params, b.params)
    assert np.all(np.abs(a.weights) <= 0.05)
    assert np.all(a.biases == 0)
    assert a.weights.shape == (10, 32)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20, 32))
    y = rng.integers(0, 10, size=20)
    params = rng.normal(scale=0.3, size=330)
    _, grad = loss_and_grad(params, x, y, 10)
    h = 1e-5
    for i in rng.choice(330, size=10, replace=False):
        e = np.zeros(330)
        e[i] = h
        fd = (loss_and_grad(params + e, x, y, 10)[0] - loss_and_grad(params - e, x, y, 10)[0]) / (2 * h)
        assert abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-12) < 1e-4


def test_zero_lr_leaves_params():
    rng = np.random.default_rng(1)
    m = rand_model(rng)
    out = train_client(m, rng.normal(size=(30, 32)), rng.integers(0, 10, 30), 2, 10, 0.0, rng, client_id=4)
    assert np.array_equal(out.params, m.params)
    assert out.client_id == 4


def test_training_does_not_mutate_input():
    rng = np.random.default_rng(2)
    m = rand_model(rng)
    before = m.params.copy()
    train_client(m, rng.normal(size=(30, 32)), rng.integers(0, 10, 30), 1, 10, 0.1, rng)
    assert np.array_equal(before, m.params)


def test_epochs_equal_repeated_single_epochs():
    rng = np.random.default_rng(3)
    m = rand_model(rng)
    x, y = rng.normal(size=(25, 32)), rng.integers(0, 10, 25)
    two = train_client(m, x, y, 2, 10, 0.01, np.random.default_rng(9))
    g = np.random.default_rng(9)
    one = train_client(train_client(m, x, y, 1, 10, 0.01, g), x, y, 1, 10, 0.01, g)
    assert np.allclose(two.params, one.params, rtol=0, atol=1e-14)


def test_divergence_raises():
    rng = np.random.default_rng(4)
    m = rand_model(rng)
    with pytest.raises(NonFinite), np.errstate(all="ignore"):
        train_client(m, rng.normal(scale=1e6, size=(20, 32)), rng.integers(0, 10, 20), 5, 10, 1e300, rng)


def test_aggregate_examples():
    rng = np.random.default_rng(5)
    v = rand_model(rng)
    assert np.array_equal(aggregate([(v, 3)]).params, v.params)
    neg = ModelState(-v.params, 10, 32)
    assert np.allclose(aggregate([(v, 2), (neg, 2)]).params, 0.0, atol=1e-15)
    ms = [rand_model(rng) for _ in range(3)]
    out = aggregate(list(zip(ms, (1, 2, 3))))
    for j in range(330):
        expected = sum(s * m.params[j] for m, s in zip(ms, (1, 2, 3))) / 6
        assert abs(out.params[j] - expected) <= 1e-12 * max(1.0, abs(expected))
    with pytest.raises(EmptyAggregation):
        aggregate([])


def test_evaluate_constant_predictor():
    params = np.zeros(330)
    params[320] = 1.0  # bias of class 0
    m = ModelState(params, 10, 32)
    x = np.random.default_rng(0).normal(size=(100, 32))
    y = np.repeat(np.arange(10), 10)
    assert evaluate(m, x, y) == pytest.approx(0.1)
    assert np.all(predict(ModelState(np.zeros(330), 10, 32), x) == 0)


def test_init_model_is_near_chance():
    x = np.random.default_rng(0).normal(size=(1000, 32))
    y = np.repeat(np.arange(10), 100)
    accs = [evaluate(init_model(10, 32, derive_stream(s, "model_init")), x, y) for s in range(50)]
    assert abs(np.mean(accs) - 0.1) <= 0.05


def test_staleness_weight_and_merge():
    rng = np.random.default_rng(6)
    g, u = rand_model(rng), rand_model(rng)
    assert np.array_equal(fedasync_merge(g, u, 0, alpha_base=1.0).params, u.params)
    assert np.allclose(fedasync_merge(g, u, 0).params, 0.4 * g.params + 0.6 * u.params, rtol=1e-12, atol=0)
    assert staleness_weight(3) == pytest.approx(0.3, rel=1e-12)
    merged = fedasync_merge(g, u, 3).params
    assert np.allclose(merged, 0.7 * g.params + 0.3 * u.params, rtol=1e-12, atol=1e-15)
    with pytest.raises(ValueError):
        fedasync_merge(g, u, -1)


def test_checkpoint_round_trip(tmp_path):
    m = rand_model(np.random.default_rng(7))
    path = tmp_path / "m.bin"
    save_checkpoint(m, path)
    assert len(path.read_bytes()) == 16 + 8 * 330
    back = load_checkpoint(path)
    assert np.array_equal(back.params, m.params)
    path.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(ValueError):
        load_checkpoint(path)
