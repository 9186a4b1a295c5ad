import struct

import numpy as np
import pytest

from resmps import checkpoint
from resmps.errors import FormatError
from resmps.models import Activation, FeatureMap, init_params


@pytest.mark.parametrize("kind,kw", [
    ("sresmps", {"dropout": 0.1}),
    ("aresmps", {"activation": Activation.RELU}),
    ("aresmps", {"activation": Activation.NONE, "dropout": 0.0}),
    ("mps", {"feature_map": FeatureMap.NORM_ONE}),
])
def test_round_trip(kind, kw, tmp_path):
    p = init_params(kind, 5, 3, 4, eps=0.2, seed=1, **kw)
    checkpoint.save(p, tmp_path / "m.rmps")
    q = checkpoint.load(tmp_path / "m.rmps")
    assert type(q) is type(p) and q.dropout == p.dropout
    for name, a in p.arrays().items():
        np.testing.assert_array_equal(q.arrays()[name], a)
    assert checkpoint.to_bytes(q) == checkpoint.to_bytes(p)


def test_header_layout():
    p = init_params("sresmps", 2, 3, 4, eps=0.1, seed=0, dropout=0.25)
    raw = checkpoint.to_bytes(p)
    magic, version, kind, N, chi, C, fmap, rate = struct.unpack_from("<4sIBIIIBd", raw)
    assert (magic, version, kind, N, chi, C, fmap, rate) == (b"RMPS", 1, 1, 2, 3, 4, 0, 0.25)
    off = struct.calcsize("<4sIBIIIBd")
    rank, d0, d1 = struct.unpack_from("<III", raw, off)
    assert (rank, d0, d1) == (2, 3, 3)
    first = np.frombuffer(raw, dtype="<f8", count=9, offset=off + 12).reshape(3, 3)
    np.testing.assert_array_equal(first, p.weights[0])
    # N layers + readout weight + bias
    assert len(raw) == off + 2 * (12 + 72) + (12 + 96) + (8 + 32)


def test_bad_magic_and_truncation():
    raw = checkpoint.to_bytes(init_params("mps", 2, 2, 2, seed=0))
    with pytest.raises(FormatError):
        checkpoint.from_bytes(b"XXXX" + raw[4:])
    with pytest.raises(OSError):
        checkpoint.from_bytes(raw[:-3])
    with pytest.raises(FormatError):
        checkpoint.from_bytes(raw + b"\0")
