import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resmps.config import TrainConfig
from resmps.errors import DomainError
from resmps.expansion import (TruncatedModel, graded_terms, order_norm_profile, order_term,
                              report_tsv, retrain_truncated, truncated_accuracy,
                              truncated_forward, truncated_gradients)
from resmps.models import forward, init_params

from oracles import brute_force_order, relative_error, sequential_hidden


def _model(N=6, chi=3, eps=0.4, seed=0):
    return init_params("sresmps", N, chi, 4, eps=eps, seed=seed)


def test_order_zero_and_one():
    p = _model()
    x = np.random.default_rng(0).random(6)
    np.testing.assert_array_equal(order_term(p, x, 0).contribution, np.ones(3))
    linear = sum(x[a] * (np.ones(3) @ p.weights[a]) for a in range(6))
    np.testing.assert_allclose(order_term(p, x, 1).contribution, linear, rtol=1e-13)


def test_two_scalar_layers_by_hand():
    p = init_params("sresmps", 2, 1, 2, seed=0)
    p.weights[:, 0, 0] = [0.7, -1.3]
    x = np.array([0.4, 0.9])
    assert order_term(p, x, 2).contribution[0] == pytest.approx(0.4 * 0.9 * -1.3 * 0.7, rel=1e-15)


@pytest.mark.parametrize("seed", range(4))
def test_enumeration_matches_brute_force(seed):
    p = _model(N=5, chi=3, seed=seed)
    x = np.random.default_rng(seed).random(5)
    for k in range(6):
        term = order_term(p, x, k)
        expected, count = brute_force_order(p.weights, x, k)
        np.testing.assert_allclose(term.contribution, expected, rtol=1e-12, atol=1e-14)
        assert term.n_terms == count == math.comb(5, k)


def test_graded_matches_enumeration():
    p = _model(N=7, chi=4, seed=3)
    X = np.random.default_rng(3).random((5, 7))
    graded = graded_terms(p, X, 7)
    for k in range(8):
        np.testing.assert_allclose(graded[k], order_term(p, X, k).contribution, rtol=1e-11, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 8), st.integers(0, 2**31))
def test_full_expansion_equals_product(chi, N, seed):
    p = _model(N=N, chi=chi, eps=0.5, seed=seed)
    x = np.random.default_rng(seed).random(N)
    total = sum(order_term(p, x, k).contribution for k in range(N + 1))
    np.testing.assert_allclose(total, sequential_hidden(p.weights, x), rtol=1e-10, atol=1e-12)
    full = forward(p, x)
    for method in ("enumerate", "graded"):
        trunc = truncated_forward(TruncatedModel(p, N), x, method=method)
        assert np.max(np.abs(trunc - full)) <= 1e-10 * max(1.0, np.abs(full).max())


def test_kmax_zero_is_input_independent():
    p = _model()
    X = np.random.default_rng(0).random((4, 6))
    out = truncated_forward(TruncatedModel(p, 0), X)
    expected = np.ones(3) @ p.readout.weight + p.readout.bias
    np.testing.assert_allclose(out, np.tile(expected, (4, 1)), rtol=1e-14)


def test_homogeneity():
    p = _model(seed=5)
    x = np.random.default_rng(5).random(6)
    lam = 0.37
    q = p.copy()
    q.weights *= lam
    for k in range(7):
        a = order_term(q, x, k).contribution
        b = lam ** k * order_term(p, x, k).contribution
        assert relative_error(a, b) <= 1e-12


def test_multilinear_in_each_feature():
    p = _model(seed=6)
    x = np.random.default_rng(6).random(6)
    for k in (1, 2, 3):
        for a in range(6):
            vals = []
            for t in (0.0, 0.5, 1.0):
                y = x.copy()
                y[a] = t
                vals.append(order_term(p, y, k).contribution)
            np.testing.assert_allclose(vals[1] - vals[0], vals[2] - vals[1], rtol=1e-10, atol=1e-14)


def test_norm_profile():
    p = _model(seed=7)
    x = np.random.default_rng(7).random(6)
    base = order_norm_profile(p, x, 4)
    q = p.copy()
    q.weights *= 2.0
    np.testing.assert_allclose(order_norm_profile(q, x, 4), base * 2.0 ** np.arange(5), rtol=1e-12)
    z = _model(eps=0.0)
    np.testing.assert_array_equal(order_norm_profile(z, x, 3), [np.sqrt(3), 0, 0, 0])


def test_norms_decay_for_small_init():
    p = init_params("sresmps", 12, 6, 3, eps=1e-3, seed=0)
    x = np.random.default_rng(0).random(12)
    norms = order_norm_profile(p, x, 4, method="enumerate")
    assert all(norms[k + 1] < norms[k] for k in range(1, 4))


def test_cost_guard():
    p = init_params("sresmps", 200, 1, 2, seed=0)
    with pytest.raises(DomainError):
        order_term(p, np.zeros(200), 6)
    with pytest.raises(DomainError):
        truncated_forward(TruncatedModel(p, 6), np.zeros(200))
    truncated_forward(TruncatedModel(p, 6), np.zeros(200), method="graded")
    with pytest.raises(DomainError):
        TruncatedModel(p, 201)


@pytest.mark.parametrize("kmax", [1, 2, 3])
def test_truncated_gradients_match_finite_differences(kmax):
    p = _model(N=6, chi=3, eps=0.4, seed=kmax)
    rng = np.random.default_rng(kmax)
    X, y = rng.random((5, 6)), rng.integers(0, 4, 5)
    _, grads = truncated_gradients(p, X, y, kmax)

    def loss(q):
        from resmps.training import softmax_cross_entropy
        logits = truncated_forward(TruncatedModel(q, kmax), X, method="graded")
        return softmax_cross_entropy(logits, y)[0].mean()

    for name, g in grads.arrays().items():
        arr = p.arrays()[name]
        fd = np.zeros_like(arr)
        for i in np.ndindex(arr.shape):
            old = arr[i]
            arr[i] = old + 1e-5
            up = loss(p)
            arr[i] = old - 1e-5
            down = loss(p)
            arr[i] = old
            fd[i] = (up - down) / 2e-5
        assert relative_error(g, fd) < 1e-4, name


def test_retrain_truncated_learns(blobs):
    train_set, test_set = blobs
    cfg = TrainConfig(chi=4, epochs=4, batch_size=10, lr=5e-3)
    params, metrics = retrain_truncated(train_set, cfg, 1, test_set=test_set)
    assert truncated_accuracy(TruncatedModel(params, 1), test_set) > 0.8
    assert metrics.final.test_acc == truncated_accuracy(TruncatedModel(params, 1), test_set)


def test_report_format():
    text = report_tsv([[0, 1.5, 0.1], [1, 0.25, 0.8]])
    assert text.splitlines() == ["k\tnorm\tcumulative_acc", "0\t1.5\t0.100000", "1\t0.25\t0.800000"]
