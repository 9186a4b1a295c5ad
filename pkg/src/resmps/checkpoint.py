"""Binary checkpoint format.

Layout (little-endian)::

    b"RMPS"  u32 version=1  u8 kind  u32 N  u32 chi  u32 C  u8 feature_map  f64 dropout
    then every tensor in layer order, readout last, each written as
    u32 rank, rank x u32 dims, row-major f64 payload

Kind codes: 0 MPS, 1 sResMPS, 2 aResMPS with ReLU, 3 aResMPS without
activation. Per layer the tensors are: MPS core (2, chi, chi); sResMPS
W (chi, chi); aResMPS W1 (chi, chi), W2 (chi, chi), b (chi,). The readout
follows as R (chi, C) and bias (C,).
"""

import io
import os
import struct

import numpy as np

from .errors import FormatError
from .models import (AResMPS, MPS, Activation, FeatureMap, ModelKind, Readout,
                     SResMPS)

MAGIC = b"RMPS"
VERSION = 1
_HEADER = struct.Struct("<4sIBIIIBd")


def _kind_code(params):
    if params.kind is ModelKind.MPS:
        return 0
    if params.kind is ModelKind.SRESMPS:
        return 1
    return 2 if params.activation is Activation.RELU else 3


def _layer_tensors(params, n):
    if params.kind is ModelKind.MPS:
        return [params.cores[n]]
    if params.kind is ModelKind.SRESMPS:
        return [params.weights[n]]
    return [params.weights[n, 0], params.weights[n, 1], params.bias[n]]


def _write_tensor(buf, a):
    a = np.ascontiguousarray(a, dtype="<f8")
    buf.write(struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape))
    buf.write(a.tobytes())


def to_bytes(params):
    if params.kind is ModelKind.MPS:
        fmap = int(params.feature_map)
    elif params.kind is ModelKind.SRESMPS:
        fmap = int(FeatureMap.AFFINE)
    else:
        fmap = int(FeatureMap.NORM_ONE)
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, VERSION, _kind_code(params), params.n_features,
                           params.chi, params.n_classes, fmap, float(params.dropout)))
    for n in range(params.n_features):
        for t in _layer_tensors(params, n):
            _write_tensor(buf, t)
    _write_tensor(buf, params.readout.weight)
    _write_tensor(buf, params.readout.bias)
    return buf.getvalue()


class _Reader:
    def __init__(self, raw):
        self.raw = raw
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.raw):
            raise OSError("truncated checkpoint")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def tensor(self, shape):
        (rank,) = struct.unpack("<I", self.take(4))
        dims = struct.unpack(f"<{rank}I", self.take(4 * rank))
        if tuple(dims) != tuple(shape):
            raise FormatError(f"expected tensor of shape {tuple(shape)}, found {dims}")
        count = int(np.prod(dims)) if dims else 1
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64).reshape(dims)


def from_bytes(raw):
    if len(raw) < _HEADER.size:
        raise OSError("truncated checkpoint header")
    magic, version, code, N, chi, C, fmap, dropout = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if code > 3 or fmap > 1:
        raise FormatError(f"unknown model kind {code} or feature map {fmap}")
    r = _Reader(raw)
    r.pos = _HEADER.size
    if code == 0:
        cores = np.stack([r.tensor((2, chi, chi)) for _ in range(N)]) if N else np.zeros((0, 2, chi, chi))
        make = lambda ro: MPS(readout=ro, cores=cores, feature_map=FeatureMap(fmap))
    elif code == 1:
        W = np.stack([r.tensor((chi, chi)) for _ in range(N)]) if N else np.zeros((0, chi, chi))
        make = lambda ro: SResMPS(readout=ro, weights=W, dropout=dropout)
    else:
        W = np.zeros((N, 2, chi, chi))
        b = np.zeros((N, chi))
        for n in range(N):
            W[n, 0] = r.tensor((chi, chi))
            W[n, 1] = r.tensor((chi, chi))
            b[n] = r.tensor((chi,))
        act = Activation.RELU if code == 2 else Activation.NONE
        make = lambda ro: AResMPS(readout=ro, weights=W, bias=b, activation=act, dropout=dropout)
    ro = Readout(r.tensor((chi, C)), r.tensor((C,)))
    if r.pos != len(raw):
        raise FormatError(f"{len(raw) - r.pos} trailing bytes in checkpoint")
    return make(ro)


def save(params, path):
    data = to_bytes(params)
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def load(path):
    with open(path, "rb") as f:
        return from_bytes(f.read())
