"""Classifier, backprop core and parameter algebra unit tests."""

import numpy as np
import pytest

from conftest import (balanced_batch, make_params, params_allclose,
                      params_equal, tiny_122_net)
from vecafl.model import (LabeledBatch, cross_entropy, evaluate,
                          flatten_params, forward, gradient, init_params,
                          load_params, local_train, model_size_bits,
                          params_axpy, params_combine, params_copy,
                          params_from_bytes, params_mean, params_scale,
                          params_to_bytes, save_params, sgd_step,
                          unflatten_params)
from vecafl.rng import substream

LN10 = 2.3025850929940457


# -- initialization ----------------------------------------------------------


def test_init_same_seed_identical():
    a = init_params((64, 32, 10), substream(1, "init"))
    b = init_params((64, 32, 10), substream(1, "init"))
    assert params_equal(a, b)


def test_init_parameter_count():
    p = init_params((64, 32, 10), substream(1, "init"))
    assert flatten_params(p).size == 64 * 32 + 32 + 32 * 10 + 10  # 2410


def test_init_biases_zero():
    p = init_params((64, 32, 10), substream(1, "init"))
    assert all(np.all(b == 0.0) for b in p.layer_biases)


def test_init_rejects_bad_architecture():
    with pytest.raises(ValueError):
        init_params((64,), substream(1, "init"))
    with pytest.raises(ValueError):
        init_params((64, 0, 10), substream(1, "init"))


# -- forward pass ------------------------------------------------------------


def test_forward_rows_sum_to_one():
    p = init_params((8, 6, 10), substream(2, "fw"))
    x = substream(3, "fw-x").uniform(0, 1, size=(7, 8))
    probs = forward(p, x)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_forward_zero_params_uniform():
    p = make_params([np.zeros((4, 10))], [np.zeros(10)])
    probs = forward(p, np.ones(4))
    assert np.allclose(probs, 0.1, atol=1e-12)


def test_forward_tiny_hand_case():
    probs = forward(tiny_122_net(), np.array([0.5]))
    assert probs[0] == pytest.approx(0.63413559101080068, abs=1e-9)
    assert probs[1] == pytest.approx(0.36586440898919932, abs=1e-9)


# -- cross entropy -----------------------------------------------------------


def test_cross_entropy_uniform_is_ln10():
    p = make_params([np.zeros((4, 10))], [np.zeros(10)])
    batch = balanced_batch(30, 4)
    assert cross_entropy(p, batch) == pytest.approx(LN10, abs=1e-12)


def test_cross_entropy_confident_correct_is_zero():
    # logits put +60 on the true class; the picked probability rounds to 1
    batch = LabeledBatch(np.eye(10), np.arange(10))
    p = make_params([np.eye(10) * 60.0], [np.zeros(10)])
    assert cross_entropy(p, batch) < 1e-9


def test_cross_entropy_two_sample_hand_case():
    # both rows share the tiny net's logits; labels pick class 0 then 1
    batch = LabeledBatch(np.array([[0.5], [0.5]]), np.array([0, 1]))
    assert cross_entropy(tiny_122_net(), batch) \
        == pytest.approx(0.73049248146333764, abs=1e-9)


def test_cross_entropy_rejects_empty_batch():
    p = make_params([np.zeros((4, 10))], [np.zeros(10)])
    with pytest.raises(ValueError):
        cross_entropy(p, LabeledBatch(np.zeros((0, 4)), np.zeros(0, int)))


# -- gradient ----------------------------------------------------------------


def _central_difference(params, batch, eps=1e-5):
    flat = flatten_params(params)
    grad = np.empty_like(flat)
    for i in range(flat.size):
        up, down = flat.copy(), flat.copy()
        up[i] += eps
        down[i] -= eps
        grad[i] = (cross_entropy(unflatten_params(up, params.architecture),
                                 batch)
                   - cross_entropy(unflatten_params(down,
                                                    params.architecture),
                                   batch)) / (2 * eps)
    return grad


def test_gradient_matches_finite_differences():
    params = init_params((8, 4, 10), substream(7, "grad"))
    batch = balanced_batch(20, 8, seed=8)
    got = flatten_params(gradient(params, batch))
    want = _central_difference(params, batch)
    denom = np.maximum(np.abs(want), 1e-8)
    assert np.max(np.abs(got - want) / denom) < 1e-4


def test_gradient_zero_params_balanced_bias_grad():
    params = make_params([np.zeros((4, 10))], [np.zeros(10)])
    batch = balanced_batch(40, 4)  # 4 samples of every class
    g = gradient(params, batch)
    assert np.allclose(g.layer_biases[-1], 0.0, atol=1e-12)


def test_gradient_duplication_invariance():
    params = init_params((6, 5, 10), substream(9, "grad"))
    batch = balanced_batch(10, 6, seed=10)
    doubled = LabeledBatch(np.vstack([batch.inputs, batch.inputs]),
                           np.concatenate([batch.labels, batch.labels]))
    assert params_allclose(gradient(params, batch),
                           gradient(params, doubled), tol=1e-12)


# -- SGD ----------------------------------------------------------------------


def test_sgd_zero_gradient_noop():
    p = init_params((3, 2), substream(4, "sgd"))
    zero = params_scale(p, 0.0)
    assert params_equal(sgd_step(p, zero, 0.5), p)


def test_sgd_hand_case():
    p = make_params([[[1.0]]], [[1.0]])
    g = make_params([[[1.0]]], [[1.0]])
    out = sgd_step(p, g, 0.1)
    assert out.layer_weights[0][0, 0] == pytest.approx(0.9)
    assert out.layer_biases[0][0] == pytest.approx(0.9)


def test_sgd_steps_compose_linearly():
    p = init_params((3, 2), substream(4, "sgd"))
    g = init_params((3, 2), substream(5, "sgd"))
    two = sgd_step(sgd_step(p, g, 0.1), g, 0.2)
    one = sgd_step(p, g, 0.3)
    assert params_allclose(two, one, tol=1e-12)


def test_sgd_rejects_negative_eta():
    p = init_params((3, 2), substream(4, "sgd"))
    with pytest.raises(ValueError):
        sgd_step(p, p, -0.1)


# -- local training ----------------------------------------------------------


def test_local_train_zero_eta_noop():
    start = init_params((6, 4, 10), substream(11, "lt"))
    batch = balanced_batch(16, 6)
    out, loss = local_train(start, batch, 3, 0.0, 8, substream(12, "lt"))
    assert params_equal(out, start)
    assert loss == pytest.approx(cross_entropy(start, batch), abs=1e-12)


def test_local_train_reduces_loss_on_separable_toy():
    rng = substream(13, "lt")
    inputs = np.vstack([rng.uniform(0.0, 0.3, size=(30, 4)),
                        rng.uniform(0.7, 1.0, size=(30, 4))])
    labels = np.array([0] * 30 + [1] * 30)
    batch = LabeledBatch(inputs, labels)
    start = init_params((4, 6, 10), substream(14, "lt"))
    before = cross_entropy(start, batch)
    _, after = local_train(start, batch, 5, 0.1, 10, substream(15, "lt"))
    assert after < before


def test_local_train_deterministic():
    start = init_params((6, 4, 10), substream(16, "lt"))
    batch = balanced_batch(20, 6, seed=17)
    a, la = local_train(start, batch, 2, 0.05, 7, substream(18, "lt"))
    b, lb = local_train(start, batch, 2, 0.05, 7, substream(18, "lt"))
    assert params_equal(a, b)
    assert la == lb


def test_local_train_rejects_bad_batch_size():
    start = init_params((6, 4, 10), substream(16, "lt"))
    with pytest.raises(ValueError):
        local_train(start, balanced_batch(20, 6), 1, 0.1, 0,
                    substream(18, "lt"))


# -- evaluation ---------------------------------------------------------------


def test_evaluate_all_correct():
    batch = LabeledBatch(np.eye(10), np.arange(10))
    p = make_params([np.eye(10) * 60.0], [np.zeros(10)])
    acc, err = evaluate(p, batch)
    assert acc == 1.0 and err == 0.0


def test_evaluate_zero_params_ties_to_class_zero():
    p = make_params([np.zeros((4, 10))], [np.zeros(10)])
    batch = balanced_batch(50, 4)
    acc, err = evaluate(p, batch)
    assert acc == pytest.approx(np.mean(batch.labels == 0))
    assert acc + err == pytest.approx(1.0, abs=1e-15)


def test_evaluate_accuracy_error_sum_to_one():
    p = init_params((5, 4, 10), substream(19, "ev"))
    batch = balanced_batch(33, 5, seed=20)
    acc, err = evaluate(p, batch)
    assert acc + err == pytest.approx(1.0, abs=1e-15)


# -- payload size -------------------------------------------------------------


def test_model_size_bits_passthrough():
    p = init_params((3, 2), substream(21, "sz"))
    assert model_size_bits(p) == 5000
    assert model_size_bits(p, 10000) == 10000
    with pytest.raises(ValueError):
        model_size_bits(p, 0)


# -- parameter algebra --------------------------------------------------------


def test_params_mean_of_zero_and_one():
    zero = make_params([np.zeros((2, 2))], [np.zeros(2)])
    one = make_params([np.ones((2, 2))], [np.ones(2)])
    mean = params_mean([zero, one])
    assert np.allclose(mean.layer_weights[0], 0.5)
    assert np.allclose(mean.layer_biases[0], 0.5)


def test_params_mean_identical_models_fixed_point():
    p = init_params((4, 3), substream(22, "alg"))
    assert params_allclose(params_mean([p, params_copy(p)]), p, tol=1e-15)


def test_params_combine_hand_case():
    a = make_params([np.full((2, 2), 2.0)], [np.full(2, 2.0)])
    b = make_params([np.full((2, 2), 4.0)], [np.full(2, 4.0)])
    out = params_combine(0.25, a, 0.75, b)
    assert np.allclose(out.layer_weights[0], 3.5)


def test_params_axpy_shape_mismatch():
    a = init_params((4, 3), substream(22, "alg"))
    b = init_params((4, 2), substream(22, "alg"))
    with pytest.raises(ValueError):
        params_axpy(a, b, 1.0)
    with pytest.raises(ValueError):
        params_mean([])


# -- serialization ------------------------------------------------------------


def test_params_bytes_round_trip():
    p = init_params((6, 5, 10), substream(23, "ser"))
    back = params_from_bytes(params_to_bytes(p))
    assert params_equal(p, back)


def test_params_file_round_trip(tmp_path):
    p = init_params((6, 5, 10), substream(24, "ser"))
    path = tmp_path / "params.bin"
    save_params(p, path)
    assert params_equal(load_params(path), p)


def test_unflatten_rejects_wrong_length():
    with pytest.raises(ValueError):
        unflatten_params(np.zeros(7), (3, 2))


def test_params_bytes_rejects_truncated_payload():
    blob = params_to_bytes(init_params((3, 2), substream(25, "ser")))
    with pytest.raises(ValueError):
        params_from_bytes(blob[:-8])
