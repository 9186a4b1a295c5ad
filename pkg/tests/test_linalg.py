import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resmps.errors import ShapeError
from resmps.linalg import batched_affine, matmul, scaled_outer_sum


def test_identity_left():
    M = np.array([[0.3, -1.2], [2.5, 4.0]])
    np.testing.assert_array_equal(matmul(np.eye(2), M), M)


def test_hand_product():
    np.testing.assert_array_equal(matmul([[1, 2], [3, 4]], [[0], [1]]), [[2], [4]])


def test_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
        matmul(np.zeros((2, 3)), np.zeros((2, 2)))


def test_batched_affine_trivial_cases():
    rng = np.random.default_rng(0)
    H = rng.normal(size=(5, 3))
    np.testing.assert_array_equal(batched_affine(H, rng.normal(size=(3, 4)), 0.0), np.zeros((5, 4)))
    np.testing.assert_array_equal(batched_affine(H, np.eye(3), 1.0), H)
    with pytest.raises(ShapeError):
        batched_affine(H, np.zeros((4, 4)))


def test_single_row_matches_matmul():
    rng = np.random.default_rng(1)
    h, W = rng.normal(size=(1, 6)), rng.normal(size=(6, 6))
    np.testing.assert_array_equal(batched_affine(h, W, 1.0), matmul(h, W))


def test_agrees_with_numpy():
    rng = np.random.default_rng(2)
    A, B = rng.normal(size=(7, 5)), rng.normal(size=(5, 3))
    np.testing.assert_allclose(matmul(A, B), A @ B, rtol=1e-13, atol=1e-13)
    G, s = rng.normal(size=(7, 3)), rng.normal(size=7)
    np.testing.assert_allclose(scaled_outer_sum(A, G, s), A.T @ (s[:, None] * G), rtol=1e-12, atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
def test_associativity(a, b, c, d, seed):
    rng = np.random.default_rng(seed)
    A, B, C = rng.normal(size=(a, b)), rng.normal(size=(b, c)), rng.normal(size=(c, d))
    left, right = matmul(matmul(A, B), C), matmul(A, matmul(B, C))
    scale = np.abs(A) @ np.abs(B) @ np.abs(C)
    assert np.all(np.abs(left - right) <= 1e-9 * scale)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**31))
def test_rows_are_bit_identical(batch, p, q, seed):
    rng = np.random.default_rng(seed)
    H, W, s = rng.normal(size=(batch, p)), rng.normal(size=(p, q)), rng.normal(size=batch)
    full = batched_affine(H, W, s)
    for r in range(batch):
        np.testing.assert_array_equal(full[r], batched_affine(H[r:r + 1], W, s[r])[0])
