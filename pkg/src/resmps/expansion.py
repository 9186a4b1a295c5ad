"""Polynomial expansion of the sResMPS and truncated effective models.

In row-vector form the network output is
``h[N] = h[0] (I + x_1 W[1]) (I + x_2 W[2]) ... (I + x_N W[N])`` and the
order-k term collects every product of k distinct layers taken in
increasing layer order::

    term_k = sum_{a_1 < ... < a_k} x_{a_1} ... x_{a_k} h[0] W[a_1] ... W[a_k]

Keeping orders 0..kmax gives a truncated model; kmax = 1 is linear in the
features and kmax = 2 resembles a factorization machine.

Two independent routes compute the terms: :func:`order_term` enumerates
index tuples explicitly (combinatorial cost, guarded), while
:func:`graded_terms` carries one partial sum per order through the layers
(cost ``O(N * kmax * chi^2)``).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .linalg import batched_affine, scaled_outer_sum
from .models import ModelKind, SResMPS
from .training import softmax_cross_entropy, train

MAX_TUPLES = 10 ** 8


@dataclass
class OrderTerm:
    k: int
    contribution: np.ndarray  # (chi,) or (B, chi)
    n_terms: int


@dataclass
class TruncatedModel:
    params: SResMPS
    kmax: int

    def __post_init__(self):
        if self.params.kind is not ModelKind.SRESMPS:
            raise DomainError("polynomial expansion is defined for sResMPS models")
        if not 0 <= self.kmax <= self.params.n_features:
            raise DomainError(f"kmax={self.kmax} outside [0, {self.params.n_features}]")


def _inputs(params, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != params.n_features:
        raise ShapeError(f"input of shape {x.shape} does not match N={params.n_features}")
    return X, single


def _guard(N, k, override):
    count = math.comb(N, k)
    if count > MAX_TUPLES and not override:
        raise DomainError(f"C({N},{k}) = {count} index tuples exceeds {MAX_TUPLES}; "
                          "pass override=True or use method='graded'")
    return count


def order_term(params, x, k, override=False):
    """Order-``k`` contribution by explicit enumeration of index tuples.

    Works on one sample (N,) or a batch (B, N). Shared prefixes of the
    tuples are reused, so the cost is ``sum_{j<=k} C(N, j)`` vector-matrix
    products.
    """
    N = params.n_features
    if not 0 <= k <= N:
        raise DomainError(f"order {k} outside [0, {N}]")
    X, single = _inputs(params, x)
    _guard(N, k, override)
    B, chi = X.shape[0], params.chi
    out = np.zeros((B, chi))
    count = 0
    W = params.weights

    # Depth-first over increasing tuples; `vec` is h0 W[a_1]..W[a_d].
    stack = [(0, 0, np.ones(chi), np.ones(B))]
    while stack:
        start, depth, vec, coef = stack.pop()
        if depth == k:
            out += coef[:, None] * vec[None, :]
            count += 1
            continue
        for a in range(N - (k - depth) + 1 - 1, start - 1, -1):
            stack.append((a + 1, depth + 1, vec @ W[a], coef * X[:, a]))
    result = out[0] if single else out
    return OrderTerm(k, result, count)


def graded_terms(params, x, kmax):
    """All order contributions 0..kmax at once, shape (kmax+1, B, chi)."""
    N = params.n_features
    if not 0 <= kmax <= N:
        raise DomainError(f"kmax={kmax} outside [0, {N}]")
    X, single = _inputs(params, x)
    terms, _ = _graded_forward(params, X, kmax, record=False)
    return terms[:, 0] if single else terms


def _graded_forward(params, X, kmax, record):
    B, chi = X.shape[0], params.chi
    terms = np.zeros((kmax + 1, B, chi))
    terms[0] = 1.0
    history = [] if record else None
    for n in range(params.n_features):
        x = X[:, n]
        if record:
            history.append(terms.copy())
        if not x.any():
            continue
        for k in range(kmax, 0, -1):
            terms[k] = terms[k] + batched_affine(terms[k - 1], params.weights[n], x)
    return terms, history


def truncated_forward(model, x, method="enumerate", override=False):
    """Logits of the model keeping expansion orders 0..kmax."""
    params = model.params
    X, single = _inputs(params, x)
    if method == "enumerate":
        _guard(params.n_features, model.kmax, override)
        h = sum(order_term(params, X, k, override=True).contribution
                for k in range(model.kmax + 1))
    elif method == "graded":
        h = graded_terms(params, X, model.kmax).sum(axis=0)
    else:
        raise ValueError(f"unknown method {method!r}")
    logits = params.readout(h)
    return logits[0] if single else logits


def order_norm_profile(params, x, kmax, method="graded", override=False):
    """Euclidean norm of each order's contribution (mean over a batch)."""
    X, single = _inputs(params, x)
    if method == "graded":
        terms = graded_terms(params, X, kmax)
    else:
        terms = np.stack([order_term(params, X, k, override).contribution for k in range(kmax + 1)])
    norms = np.linalg.norm(terms, axis=-1)
    return norms[:, 0] if single else norms.mean(axis=1)


def truncated_gradients(params, X, y, kmax, normalizer=None):
    """Mean cross-entropy of the truncated model and its parameter gradients."""
    X = np.asarray(X, dtype=np.float64)
    terms, history = _graded_forward(params, X, kmax, record=True)
    s = terms.sum(axis=0)
    losses, G = softmax_cross_entropy(params.readout(s), np.asarray(y))
    norm = float(normalizer or X.shape[0])
    G /= norm
    grads = params.zeros_like()
    grads.readout.weight[...] = scaled_outer_sum(s, G)
    grads.readout.bias[...] = G.sum(axis=0)
    g = batched_affine(G, np.ascontiguousarray(params.readout.weight.T))
    upstream = np.repeat(g[None], kmax + 1, axis=0)
    for n in range(params.n_features - 1, -1, -1):
        x = X[:, n]
        if not x.any():
            continue
        before = history[n]
        W = params.weights[n]
        WT = np.ascontiguousarray(W.T)
        dW = np.zeros_like(W)
        for k in range(1, kmax + 1):
            dW += scaled_outer_sum(before[k - 1], upstream[k], x)
        grads.weights[n] = dW
        for k in range(0, kmax):
            upstream[k] = upstream[k] + batched_affine(upstream[k + 1], WT, x)
    return float(losses.sum() / norm), grads


def truncated_accuracy(model, dataset, method="graded", chunk=2000):
    if len(dataset) == 0:
        return 0.0
    hits = 0
    for i in range(0, len(dataset), chunk):
        logits = truncated_forward(model, dataset.features[i:i + chunk], method=method)
        hits += int((logits.argmax(axis=1) == dataset.labels[i:i + chunk]).sum())
    return hits / len(dataset)


def retrain_truncated(train_set, cfg, kmax, params=None, test_set=None, on_epoch=None):
    """Train a model whose forward pass is the order-``kmax`` truncation."""
    cfg = cfg.replace(model="sresmps", dropout=0.0)

    def grad_fn(p, X, y, keep):
        return truncated_gradients(p, X, y, kmax)

    def acc_fn(p, dataset):
        return truncated_accuracy(TruncatedModel(p, kmax), dataset)

    return train(train_set, cfg, params=params, test_set=test_set, on_epoch=on_epoch,
                 grad_fn=grad_fn, acc_fn=acc_fn)


def report_tsv(rows, retrained=False):
    """Rows of ``(k, norm, cumulative_acc[, retrained_acc])``."""
    header = "k\tnorm\tcumulative_acc" + ("\tretrained_acc" if retrained else "")
    lines = [header]
    for row in rows:
        lines.append("\t".join([str(row[0])] + [f"{v:.10g}" if i == 0 else f"{v:.6f}"
                                                for i, v in enumerate(row[1:])]))
    return "\n".join(lines) + "\n"
