"""Independent reference computations used by the tests."""

import itertools

import numpy as np

from resmps.training import loss_value


def fd_gradients(params, X, y, keep=None, delta=1e-5):
    """Central finite differences of the mean loss for every parameter entry."""
    out = {}
    for name, arr in params.arrays().items():
        fd = np.zeros_like(arr)
        flat, g = arr.reshape(-1), fd.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + delta
            up = loss_value(params, X, y, keep)
            flat[i] = old - delta
            down = loss_value(params, X, y, keep)
            flat[i] = old
            g[i] = (up - down) / (2 * delta)
        out[name] = fd
    return out


def relative_error(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def sequential_hidden(weights, x):
    """h[N] by multiplying the factors (I + x_n W[n]) one after another."""
    chi = weights.shape[1]
    M = np.eye(chi)
    for n in range(weights.shape[0]):
        M = M @ (np.eye(chi) + x[n] * weights[n])
    return np.ones(chi) @ M


def brute_force_order(weights, x, k):
    """Order-k term summed over all index tuples filtered by the ordering indicator."""
    N, chi = weights.shape[0], weights.shape[1]
    total = np.zeros(chi)
    count = 0
    for tup in itertools.product(range(N), repeat=k):
        if any(tup[i] >= tup[i + 1] for i in range(k - 1)):
            continue
        count += 1
        v = np.ones(chi)
        coef = 1.0
        for a in tup:
            v = v @ weights[a]
            coef *= x[a]
        total += coef * v
    return total, count
