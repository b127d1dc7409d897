import math

import numpy as np
import pytest

from twohead import (ConfigError, DimensionError, NumericError, Scope, SgdConfig,
                     UsageError, backward, forward, grad_check, init_model,
                     sgd_step, softmax)
from twohead.nn import load_model_csv, save_model_csv
from twohead.rng import make_rng


def test_softmax_uniform_on_zeros():
    p = softmax(np.zeros(3))
    assert np.allclose(p, 1.0 / 3.0, atol=1e-15)


def test_softmax_shift_invariance():
    v = np.array([0.3, -1.2, 2.5])
    assert np.allclose(softmax(v), softmax(v + 17.0), atol=1e-12)


def test_softmax_frozen_values():
    # direct exp-normalize evaluation, frozen
    p = softmax(np.array([1.0, 2.0, 3.0]))
    assert np.allclose(p, [0.09003057, 0.24472847, 0.66524096], atol=1e-5)


def test_softmax_rejects_nonfinite():
    with pytest.raises(NumericError):
        softmax(np.array([1.0, np.nan]))
    with pytest.raises(DimensionError):
        softmax(np.zeros((2, 2)))


def test_init_model_shapes():
    m = init_model([2, 32, 32, 32], num_classes=3, seed=7)
    assert [l.weight.shape for l in m.generator] == [(32, 2), (32, 32), (32, 32)]
    assert m.head1[-1].weight.shape == (3, 32)
    assert m.head2[-1].weight.shape == (3, 32)
    assert len(m.head1) == 3 and len(m.head2) == 3


def test_init_model_deterministic_and_seed_sensitive():
    a = init_model([2, 8, 8, 8], 3, seed=7)
    b = init_model([2, 8, 8, 8], 3, seed=7)
    c = init_model([2, 8, 8, 8], 3, seed=8)
    assert a.parameters_blob() == b.parameters_blob()
    assert a.parameters_blob() != c.parameters_blob()


def test_init_model_heads_differ():
    m = init_model([2, 8, 8, 8], 3, seed=7)
    assert not np.array_equal(m.head1[0].weight, m.head2[0].weight)


def test_init_model_glorot_bounds():
    m = init_model([2, 8, 8, 8], 3, seed=7)
    for _, layer in m.named_layers():
        bound = math.sqrt(6.0 / (layer.in_dim + layer.out_dim))
        assert np.abs(layer.weight).max() <= bound
        assert np.all(layer.bias == 0.0)


def test_init_model_rejects_bad_config():
    with pytest.raises(ConfigError):
        init_model([2, 0, 8], 3, seed=1)
    with pytest.raises(ConfigError):
        init_model([2, 8], 1, seed=1)
    with pytest.raises(ConfigError):
        init_model([2], 3, seed=1)


def test_forward_zero_weight_model_is_uniform():
    m = init_model([2, 8, 8, 8], 4, seed=7)
    for _, layer in m.named_layers():
        layer.weight[:] = 0.0
        layer.bias[:] = 0.0
    p1, p2, _ = forward(m, np.array([[1.0, -2.0], [0.5, 3.0]]))
    assert np.allclose(p1, 0.25, atol=1e-15)
    assert np.allclose(p2, 0.25, atol=1e-15)


def test_forward_rows_sum_to_one():
    m = init_model([2, 8, 8, 8], 3, seed=3)
    x = make_rng(0, "x").normal(size=(17, 2))
    p1, p2, _ = forward(m, x)
    assert np.abs(p1.sum(axis=1) - 1.0).max() < 1e-12
    assert np.abs(p2.sum(axis=1) - 1.0).max() < 1e-12
    assert p1.min() > 0 and p1.max() < 1


def test_forward_is_pure():
    m = init_model([2, 8, 8, 8], 3, seed=3)
    x = np.array([[0.1, 0.2], [3.0, -1.0]])
    a1, a2, _ = forward(m, x)
    b1, b2, _ = forward(m, x)
    assert np.array_equal(a1, b1) and np.array_equal(a2, b2)


def test_forward_shape_mismatch():
    m = init_model([2, 8, 8, 8], 3, seed=3)
    with pytest.raises(DimensionError):
        forward(m, np.zeros((4, 3)))


def test_backward_zero_upstream_gives_zero_grads():
    m = init_model([2, 8, 8, 8], 3, seed=3)
    x = np.array([[0.1, 0.2], [3.0, -1.0]])
    p1, p2, cache = forward(m, x)
    backward(m, cache, np.zeros_like(p1), np.zeros_like(p2))
    for _, layer in m.named_layers():
        assert np.all(layer.grad_weight == 0.0)
        assert np.all(layer.grad_bias == 0.0)


def test_backward_is_linear_over_batch():
    m = init_model([2, 8, 8, 8], 3, seed=5)
    rng = make_rng(1, "lin")
    x = rng.normal(size=(4, 2))
    dp1 = rng.normal(size=(4, 3))
    dp2 = rng.normal(size=(4, 3))

    _, _, cache = forward(m, x)
    backward(m, cache, dp1, dp2)
    full = [layer.grad_weight.copy() for _, layer in m.named_layers()]
    m.zero_grads()

    # same upstream applied sample by sample, accumulated
    _, _, cache = forward(m, x)
    for i in range(4):
        d1 = np.zeros_like(dp1)
        d2 = np.zeros_like(dp2)
        d1[i], d2[i] = dp1[i], dp2[i]
        backward(m, cache, d1, d2)
    parts = [layer.grad_weight.copy() for _, layer in m.named_layers()]
    for f, p in zip(full, parts):
        assert np.allclose(f, p, atol=1e-12)
    m.zero_grads()


def test_backward_rejects_stale_cache():
    m = init_model([2, 8, 8, 8], 3, seed=3)
    x = np.array([[0.1, 0.2]])
    p1, p2, cache = forward(m, x)
    backward(m, cache, np.zeros_like(p1), np.zeros_like(p2))
    sgd_step(m, SgdConfig(learning_rate=0.1))
    with pytest.raises(UsageError):
        backward(m, cache, np.zeros_like(p1), np.zeros_like(p2))


def _blob(layers):
    return b"".join(np.concatenate([l.weight.ravel(), l.bias]).tobytes() for l in layers)


@pytest.mark.parametrize("scope,frozen", [
    (Scope.GENERATOR_ONLY, "heads"),
    (Scope.HEADS_ONLY, "generator"),
])
def test_sgd_scope_freezes_complement(scope, frozen):
    m = init_model([2, 8, 8, 8], 3, seed=9)
    x = np.array([[0.4, -0.2], [1.0, 2.0]])
    p1, p2, cache = forward(m, x)
    rng = make_rng(2, "up")
    backward(m, cache, rng.normal(size=p1.shape), rng.normal(size=p2.shape))

    before_heads = _blob(m.head1 + m.head2)
    before_gen = _blob(m.generator)
    sgd_step(m, SgdConfig(learning_rate=0.05, momentum=0.9), scope)
    if frozen == "heads":
        assert _blob(m.head1 + m.head2) == before_heads
        assert _blob(m.generator) != before_gen
    else:
        assert _blob(m.generator) == before_gen
        assert _blob(m.head1 + m.head2) != before_heads


def test_sgd_zeroes_gradients():
    m = init_model([2, 8, 8, 8], 3, seed=9)
    x = np.array([[0.4, -0.2]])
    p1, p2, cache = forward(m, x)
    backward(m, cache, np.ones_like(p1), np.ones_like(p2))
    sgd_step(m, SgdConfig(learning_rate=0.01))
    for _, layer in m.named_layers():
        assert np.all(layer.grad_weight == 0.0)
        assert np.all(layer.grad_bias == 0.0)


def test_sgd_config_validation():
    # the config type requires a strictly positive rate, so a zero-rate
    # "no-op step" is unrepresentable by construction
    with pytest.raises(ConfigError):
        SgdConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        SgdConfig(learning_rate=0.1, momentum=1.0)
    with pytest.raises(ConfigError):
        SgdConfig(learning_rate=0.1, weight_decay=-1e-3)


def test_grad_check_constant_loss_is_zero():
    m = init_model([2, 8, 8, 8], 3, seed=4)
    x = np.array([[0.3, 0.4], [1.0, -1.0]])

    def const(p1, p2):
        return 1.0, np.zeros_like(p1), np.zeros_like(p2)

    report = grad_check(m, const, x)
    assert report.max_rel_error == 0.0
    assert report.passed


def test_grad_check_detects_corruption():
    m = init_model([2, 8, 8, 8], 3, seed=4)
    x = np.array([[0.3, 0.4], [1.0, -1.0]])

    def corrupted(p1, p2):
        d1 = np.zeros_like(p1)
        d1[0, 0] = 1.0  # claims a gradient where the loss is constant
        return 1.0, d1, np.zeros_like(p2)

    report = grad_check(m, corrupted, x, tol=1e-4)
    assert report.max_rel_error > 1e-4
    assert not report.passed


def test_grad_check_validates_h():
    m = init_model([2, 8, 8, 8], 3, seed=4)
    with pytest.raises(ConfigError):
        grad_check(m, lambda p1, p2: (0.0, np.zeros_like(p1), np.zeros_like(p2)),
                   np.zeros((1, 2)), h=0.1)


def test_model_csv_roundtrip(tmp_path):
    m = init_model([2, 8, 8, 8], 3, seed=11)
    path = tmp_path / "model.csv"
    save_model_csv(m, path)
    loaded = load_model_csv(path)
    assert loaded.num_classes == 3
    assert loaded.parameters_blob() == m.parameters_blob()
    x = make_rng(3, "check").normal(size=(5, 2))
    a1, a2, _ = forward(m, x)
    b1, b2, _ = forward(loaded, x)
    assert np.array_equal(a1, b1) and np.array_equal(a2, b2)
