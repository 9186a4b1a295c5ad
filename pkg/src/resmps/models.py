"""Residual MPS models: feature maps, layers, forward pass, conversion, init.

Hidden states are row vectors. One sResMPS layer maps
``h -> h + x_n * h @ W[n]``; a standard two-channel MPS layer maps
``h -> xi1(x_n) * h @ T[n, 0] + xi2(x_n) * h @ T[n, 1]``. Every model starts
from ``h = ones(chi)`` and reads out ``logits = h @ R + bias``.
"""

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngs
from .errors import DomainError, ShapeError
from .linalg import batched_affine


class FeatureMap(enum.IntEnum):
    AFFINE = 0  # (1, x)
    NORM_ONE = 1  # (x, 1 - x)


class ModelKind(enum.Enum):
    MPS = "mps"
    SRESMPS = "sresmps"
    ARESMPS = "aresmps"


class Activation(enum.Enum):
    RELU = "relu"
    NONE = "none"


def feature_map(kind, x):
    """Lift a scalar feature ``x`` in [0, 1] to its two channel weights."""
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"feature value {x} outside [0, 1]")
    if FeatureMap(kind) is FeatureMap.AFFINE:
        return 1.0, float(x)
    return float(x), 1.0 - x


def channel_weights(kind, x):
    """Vectorized :func:`feature_map` for an array of features (no domain check)."""
    x = np.asarray(x, dtype=np.float64)
    if FeatureMap(kind) is FeatureMap.AFFINE:
        return np.ones_like(x), x
    return x, 1.0 - x


@dataclass
class Readout:
    weight: np.ndarray  # (chi, C)
    bias: np.ndarray  # (C,)

    def __call__(self, H):
        return batched_affine(H, self.weight) + self.bias


@dataclass
class _Model:
    readout: Readout

    @property
    def chi(self):
        return self.readout.weight.shape[0]

    @property
    def n_classes(self):
        return self.readout.weight.shape[1]

    def arrays(self):
        """Ordered mapping name -> parameter array (layers first, readout last)."""
        out = dict(self._layer_arrays())
        out["readout.weight"] = self.readout.weight
        out["readout.bias"] = self.readout.bias
        return out

    def residual_names(self):
        return list(self._layer_arrays())

    def copy(self):
        return self.with_arrays({k: v.copy() for k, v in self.arrays().items()})

    def zeros_like(self):
        return self.with_arrays({k: np.zeros_like(v) for k, v in self.arrays().items()})

    def with_arrays(self, arrays):
        ro = Readout(arrays["readout.weight"], arrays["readout.bias"])
        fields = {k: v for k, v in arrays.items() if not k.startswith("readout.")}
        return replace(self, readout=ro, **fields)


@dataclass
class SResMPS(_Model):
    weights: np.ndarray = None  # (N, chi, chi)
    dropout: float = 0.0
    kind = ModelKind.SRESMPS

    @property
    def n_features(self):
        return self.weights.shape[0]

    def _layer_arrays(self):
        return {"weights": self.weights}


@dataclass
class AResMPS(_Model):
    weights: np.ndarray = None  # (N, 2, chi, chi), channel 0 scaled by x, channel 1 by 1 - x
    bias: np.ndarray = None  # (N, chi)
    activation: Activation = Activation.RELU
    dropout: float = 0.1
    kind = ModelKind.ARESMPS

    @property
    def n_features(self):
        return self.weights.shape[0]

    def _layer_arrays(self):
        return {"weights": self.weights, "bias": self.bias}


@dataclass
class MPS(_Model):
    cores: np.ndarray = None  # (N, 2, chi, chi)
    feature_map: FeatureMap = FeatureMap.AFFINE
    dropout: float = field(default=0.0, init=False)
    kind = ModelKind.MPS

    @property
    def n_features(self):
        return self.cores.shape[0]

    def _layer_arrays(self):
        return {"cores": self.cores}


def residual_parameter_count(params):
    return sum(a.size for a in params._layer_arrays().values())


# -- single layers ---------------------------------------------------------

def _batch(h):
    h = np.asarray(h, dtype=np.float64)
    return (h[None, :], True) if h.ndim == 1 else (h, False)


def _check_square(h, W):
    if W.shape != (h.shape[1], h.shape[1]):
        raise ShapeError(f"layer matrix {W.shape} does not match hidden width {h.shape[1]}")


def sresmps_layer_forward(h, x_n, W, dropout_mask=None):
    """``h + x_n * h @ W``; ``dropout_mask`` (already rescaled) multiplies the residual."""
    H, single = _batch(h)
    _check_square(H, W)
    r = batched_affine(H, W, x_n)
    if dropout_mask is not None:
        r = r * dropout_mask
    out = H + r
    return out[0] if single else out


def aresmps_layer_forward(h, x_n, W1, W2, b, activation=Activation.RELU,
                          dropout_mask=None, rate=0.0):
    """One activated layer: ``h + dropout(act(x h W1 + (1 - x) h W2 + b))``.

    ``dropout_mask`` is a 0/1 keep mask; kept entries are scaled by
    ``1 / (1 - rate)``. Without a mask the layer runs in evaluation mode.
    """
    if rate >= 1.0 or rate < 0.0:
        raise DomainError(f"dropout rate {rate} outside [0, 1)")
    H, single = _batch(h)
    _check_square(H, W1)
    _check_square(H, W2)
    pre = _aresmps_pre(H, x_n, W1, W2, b)
    r = np.maximum(pre, 0.0) if Activation(activation) is Activation.RELU else pre
    if dropout_mask is not None:
        r = r * (np.asarray(dropout_mask) / (1.0 - rate))
    out = H + r
    return out[0] if single else out


def _aresmps_pre(H, x_n, W1, W2, b):
    return batched_affine(H, W1, x_n) + batched_affine(H, W2, 1.0 - np.asarray(x_n)) + b


def mps_layer_forward(h, x_n, T, kind=FeatureMap.AFFINE):
    """Contract the hidden state with one two-channel core ``T`` of shape (2, chi, chi)."""
    H, single = _batch(h)
    _check_square(H, T[0])
    _check_square(H, T[1])
    a, b = channel_weights(kind, x_n)
    out = batched_affine(H, T[0], a) + batched_affine(H, T[1], b)
    return out[0] if single else out


# -- whole network ---------------------------------------------------------

@dataclass
class Tape:
    """Everything the backward pass needs from one forward pass."""

    X: np.ndarray
    hidden: list  # N + 1 arrays of shape (B, chi)
    logits: np.ndarray
    pre: list = None  # aResMPS pre-activations
    keep: np.ndarray = None  # bool (N, B, chi) dropout keep masks, or None


def sample_dropout(rng, params, batch):
    """Draw keep masks for every (layer, sample, unit), or ``None`` if no dropout."""
    p = params.dropout
    if not p or rng is None:
        return None
    return rng.random((params.n_features, batch, params.chi)) >= p


def propagate(params, X, keep=None, record=True):
    """Run the network on a batch ``X`` (B, N).

    ``keep`` holds dropout keep masks (training mode); ``None`` means
    evaluation mode. With ``record`` the returned tape stores every hidden
    state; otherwise only the endpoint is kept.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.n_features:
        raise ShapeError(f"input of shape {X.shape} does not match N={params.n_features}")
    B = X.shape[0]
    H = np.ones((B, params.chi))
    hidden = [H] if record else None
    pre_acts = [] if (record and params.kind is ModelKind.ARESMPS) else None
    scale = 1.0 / (1.0 - params.dropout) if keep is not None else 1.0

    for n in range(params.n_features):
        x = X[:, n]
        if params.kind is ModelKind.SRESMPS:
            if x.any():
                r = batched_affine(H, params.weights[n], x)
                if keep is not None:
                    r = r * (keep[n] * scale)
                H = H + r
        elif params.kind is ModelKind.ARESMPS:
            W = params.weights[n]
            pre = _aresmps_pre(H, x, W[0], W[1], params.bias[n])
            r = np.maximum(pre, 0.0) if params.activation is Activation.RELU else pre
            if keep is not None:
                r = r * (keep[n] * scale)
            if pre_acts is not None:
                pre_acts.append(pre)
            H = H + r
        else:
            a, b = channel_weights(params.feature_map, x)
            T = params.cores[n]
            H = batched_affine(H, T[0], a) + batched_affine(H, T[1], b)
        if record:
            hidden.append(H)

    logits = params.readout(H)
    return Tape(X, hidden if record else [H], logits, pre_acts, keep)


def forward(params, x, mode="eval", rng=None, trace=False):
    """Class scores for one sample (N,) or a batch (B, N).

    In ``mode="train"`` dropout masks are drawn from ``rng``. With ``trace``
    the hidden states ``h[0..N]`` are returned alongside the logits.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    keep = sample_dropout(rng, params, X.shape[0]) if mode == "train" else None
    tape = propagate(params, X, keep, record=trace)
    logits = tape.logits[0] if single else tape.logits
    if not trace:
        return logits
    states = [h[0] for h in tape.hidden] if single else tape.hidden
    return logits, states


def predict(params, X, chunk=2000):
    X = np.asarray(X, dtype=np.float64)
    out = [propagate(params, X[i:i + chunk], record=False).logits.argmax(axis=1)
           for i in range(0, X.shape[0], chunk)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def accuracy(params, dataset):
    if len(dataset) == 0:
        return 0.0
    return float(np.mean(predict(params, dataset.features) == dataset.labels))


# -- conversion and initialization ----------------------------------------

def mps_from_sresmps(params):
    """Exact MPS with cores ``T[n,0] = I``, ``T[n,1] = W[n]`` and features ``(1, x)``."""
    N, chi = params.n_features, params.chi
    cores = np.empty((N, 2, chi, chi))
    cores[:, 0] = np.eye(chi)
    cores[:, 1] = params.weights
    ro = Readout(params.readout.weight.copy(), params.readout.bias.copy())
    return MPS(readout=ro, cores=cores, feature_map=FeatureMap.AFFINE)


def init_params(kind, n_features, chi, n_classes, eps=1e-3, seed=0,
                feature_map=FeatureMap.AFFINE, activation=Activation.RELU, dropout=None):
    """Identity-parameterized initialization.

    Residual matrices are i.i.d. N(0, eps^2), biases zero and the readout
    N(0, 1/chi). MPS cores are written in residual form: for the norm-one
    map both channels are ``I + noise``; for the affine map channel 0
    (weight 1) is ``I + noise`` and channel 1 (weight x) is pure noise.
    """
    if eps < 0:
        raise DomainError("init scale eps must be non-negative")
    kind = ModelKind(kind)
    gen = rngs.stream(seed, "init")
    N, chi, C = n_features, chi, n_classes
    readout = Readout(gen.normal(0.0, 1.0 / np.sqrt(chi), size=(chi, C)), np.zeros(C))
    if kind is ModelKind.SRESMPS:
        return SResMPS(readout=readout, weights=gen.normal(0.0, eps, size=(N, chi, chi)),
                       dropout=0.0 if dropout is None else dropout)
    if kind is ModelKind.ARESMPS:
        return AResMPS(readout=readout, weights=gen.normal(0.0, eps, size=(N, 2, chi, chi)),
                       bias=np.zeros((N, chi)), activation=Activation(activation),
                       dropout=0.1 if dropout is None else dropout)
    cores = gen.normal(0.0, eps, size=(N, 2, chi, chi))
    cores[:, 0] += np.eye(chi)
    if FeatureMap(feature_map) is FeatureMap.NORM_ONE:
        cores[:, 1] += np.eye(chi)
    return MPS(readout=readout, cores=cores, feature_map=FeatureMap(feature_map))
