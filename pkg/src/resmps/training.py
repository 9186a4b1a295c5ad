"""Loss, hand-derived backpropagation, optimizers and the training loop."""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngs
from .data import BatchIterator
from .errors import DivergenceError, ShapeError
from .linalg import batched_affine, scaled_outer_sum
from .models import (Activation, FeatureMap, ModelKind, accuracy, channel_weights,
                     init_params, propagate, sample_dropout)


def cross_entropy(logits, label):
    """Softmax cross-entropy of one sample and its gradient w.r.t. the logits."""
    losses, grad = softmax_cross_entropy(np.asarray(logits, dtype=np.float64)[None, :],
                                         np.array([label]))
    return float(losses[0]), grad[0]


def softmax_cross_entropy(logits, labels):
    """Per-sample losses (B,) and gradients ``softmax - onehot`` (B, C)."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    rows = np.arange(logits.shape[0])
    losses = np.log(total[:, 0]) - shifted[rows, labels]
    grad = exp / total
    grad[rows, labels] -= 1.0
    return losses, grad


def _backprop(params, tape, G):
    """Accumulate parameter gradients for upstream logit gradients ``G``."""
    grads = params.zeros_like()
    X = tape.X
    H_end = tape.hidden[-1]
    grads.readout.weight[...] = scaled_outer_sum(H_end, G)
    grads.readout.bias[...] = G.sum(axis=0)
    g = batched_affine(G, np.ascontiguousarray(params.readout.weight.T))

    keep = tape.keep
    scale = 1.0 / (1.0 - params.dropout) if keep is not None else 1.0
    for n in range(params.n_features - 1, -1, -1):
        H = tape.hidden[n]
        x = X[:, n]
        if params.kind is ModelKind.SRESMPS:
            if not x.any():
                continue
            gr = g * (keep[n] * scale) if keep is not None else g
            W = params.weights[n]
            grads.weights[n] = scaled_outer_sum(H, gr, x)
            g = g + batched_affine(gr, np.ascontiguousarray(W.T), x)
        elif params.kind is ModelKind.ARESMPS:
            gr = g * (keep[n] * scale) if keep is not None else g
            if params.activation is Activation.RELU:
                gr = gr * (tape.pre[n] > 0.0)
            W1, W2 = params.weights[n, 0], params.weights[n, 1]
            xc = 1.0 - x
            grads.bias[n] = gr.sum(axis=0)
            grads.weights[n, 0] = scaled_outer_sum(H, gr, x)
            grads.weights[n, 1] = scaled_outer_sum(H, gr, xc)
            g = (g + batched_affine(gr, np.ascontiguousarray(W1.T), x)
                 + batched_affine(gr, np.ascontiguousarray(W2.T), xc))
        else:
            a, b = channel_weights(params.feature_map, x)
            T = params.cores[n]
            grads.cores[n, 0] = scaled_outer_sum(H, g, a)
            grads.cores[n, 1] = scaled_outer_sum(H, g, b)
            g = (batched_affine(g, np.ascontiguousarray(T[0].T), a)
                 + batched_affine(g, np.ascontiguousarray(T[1].T), b))
    return grads


def backward(params, X, y, keep=None, normalizer=None):
    """Mean loss over the batch and its gradient for every parameter.

    ``keep`` carries the dropout keep masks of a training-mode pass (see
    :func:`resmps.models.sample_dropout`); ``None`` differentiates the
    evaluation-mode network. ``normalizer`` overrides the batch size used
    for averaging, which lets a batch be split into chunks whose gradients
    simply add up.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise ShapeError("empty batch")
    tape = propagate(params, X, keep, record=True)
    losses, G = softmax_cross_entropy(tape.logits, y)
    norm = float(normalizer or X.shape[0])
    G /= norm
    return float(losses.sum() / norm), _backprop(params, tape, G)


def loss_value(params, X, y, keep=None):
    """Mean cross-entropy only (used by finite-difference checks)."""
    tape = propagate(params, np.asarray(X, dtype=np.float64), keep, record=False)
    return float(softmax_cross_entropy(tape.logits, np.asarray(y))[0].mean())


def _workers():
    try:
        return max(1, int(os.environ.get("RESMPS_THREADS", "1")))
    except ValueError:
        return 1


def batch_gradients(params, X, y, keep=None, chunk=0, workers=None):
    """Gradient of the mean batch loss, optionally split into row chunks.

    Chunks are reduced in index order, so the result depends on ``chunk``
    but never on the number of worker threads.
    """
    B = X.shape[0]
    if not chunk or chunk >= B:
        return backward(params, X, y, keep)
    bounds = [(s, min(B, s + chunk)) for s in range(0, B, chunk)]

    def job(bound):
        s, e = bound
        k = keep[:, s:e] if keep is not None else None
        return backward(params, X[s:e], y[s:e], k, normalizer=B)

    workers = workers or _workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, bounds))
    else:
        parts = [job(b) for b in bounds]
    loss, total = parts[0]
    acc = {k: v.copy() for k, v in total.arrays().items()}
    for part_loss, part in parts[1:]:
        loss += part_loss
        for k, v in part.arrays().items():
            acc[k] += v
    return loss, params.with_arrays(acc)


# -- optimizers --------------------------------------------------------------

def apply_mask(params, mask):
    """Zero masked entries in place (``+0.0``, never ``-0.0``)."""
    if mask is None:
        return
    arrays = params.arrays()
    for name, m in mask.items():
        np.copyto(arrays[name], np.where(m, arrays[name], 0.0))


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads, mask=None):
        g_arrays = grads.arrays()
        for name, p in params.arrays().items():
            g = g_arrays[name]
            if mask is not None and name in mask:
                g = np.where(mask[name], g, 0.0)
            p -= self.lr * g
        apply_mask(params, mask)


class Adam:
    """Adam with bias-corrected moments (Kingma & Ba)."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads, mask=None):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        g_arrays = grads.arrays()
        for name, p in params.arrays().items():
            g = g_arrays[name]
            if mask is not None and name in mask:
                g = np.where(mask[name], g, 0.0)
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        apply_mask(params, mask)


def make_optimizer(cfg):
    if cfg.optimizer == "sgd":
        return SGD(cfg.lr)
    return Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)


# -- training loop -------------------------------------------------------------

@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float
    seconds: float


@dataclass
class RunMetrics:
    epochs: list = field(default_factory=list)
    diverged: bool = False

    TSV_HEADER = "epoch\ttrain_loss\ttrain_acc\ttest_acc\tseconds"

    @staticmethod
    def tsv_row(m):
        return f"{m.epoch}\t{m.train_loss:.10g}\t{m.train_acc:.6f}\t{m.test_acc:.6f}\t{m.seconds:.3f}"

    def to_tsv(self):
        return "\n".join([self.TSV_HEADER] + [self.tsv_row(m) for m in self.epochs]) + "\n"

    @property
    def final(self):
        return self.epochs[-1] if self.epochs else None


def params_for(cfg, n_features, n_classes):
    return init_params(
        cfg.model, n_features, cfg.chi, n_classes, eps=cfg.eps_init, seed=cfg.seed,
        feature_map=FeatureMap.AFFINE if cfg.feature_map == "affine" else FeatureMap.NORM_ONE,
        activation=Activation(cfg.activation),
        dropout=0.0 if cfg.model == "mps" else cfg.dropout,
    )


def _finite(params):
    return all(np.isfinite(a).all() for a in params.arrays().values())


def train(train_set, cfg, mask=None, params=None, test_set=None, on_epoch=None,
          grad_fn=None, acc_fn=None):
    """Fit a model with mini-batch gradient descent.

    Starts from ``params`` (copied) or a fresh initialization. ``mask`` maps
    residual parameter names to boolean keep arrays; masked entries are
    held at exactly zero. ``on_epoch(metrics, params)`` is called after
    every epoch. Raises :class:`DivergenceError` (carrying the metrics so
    far as ``.metrics``) when the loss or a parameter stops being finite.

    ``grad_fn(params, X, y, keep)`` and ``acc_fn(params, dataset)`` replace
    the network's own gradient and accuracy, e.g. for truncated models.
    """
    params = params.copy() if params is not None else params_for(cfg, train_set.n_features,
                                                                   train_set.n_classes)
    apply_mask(params, mask)
    opt = make_optimizer(cfg)
    batches = BatchIterator(len(train_set), cfg.batch_size, cfg.seed)
    dropout_rng = rngs.stream(cfg.seed, "dropout")
    X_all, y_all = train_set.features, train_set.labels
    metrics = RunMetrics()
    if grad_fn is None:
        def grad_fn(p, X, y, keep):
            return batch_gradients(p, X, y, keep, cfg.grad_chunk)
    acc_fn = acc_fn or accuracy

    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        total, count = 0.0, 0
        for idx in batches:
            X, y = X_all[idx], y_all[idx]
            keep = sample_dropout(dropout_rng, params, len(idx))
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = grad_fn(params, X, y, keep)
            if not np.isfinite(loss) or not _finite(grads):
                metrics.diverged = True
                err = DivergenceError(f"non-finite loss at epoch {epoch}", epoch)
                err.metrics = metrics
                raise err
            opt.step(params, grads, mask)
            total += loss * len(idx)
            count += len(idx)
        if not _finite(params):
            metrics.diverged = True
            err = DivergenceError(f"non-finite parameters after epoch {epoch}", epoch)
            err.metrics = metrics
            raise err
        with np.errstate(over="ignore", invalid="ignore"):
            train_acc = acc_fn(params, train_set)
            test_acc = acc_fn(params, test_set) if test_set is not None else float("nan")
        m = EpochMetrics(epoch, total / max(count, 1), train_acc, test_acc,
                         time.perf_counter() - start)
        metrics.epochs.append(m)
        if on_epoch is not None:
            on_epoch(m, params)
    return params, metrics
