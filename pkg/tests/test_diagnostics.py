import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resmps.config import TrainConfig
from resmps.diagnostics import (channel_norm, channel_norm_profile, channel_norm_tsv,
                                dominant_channel_fraction, endpoint_spread, export_trajectory,
                                init_sweep, sweep_tsv)
from resmps.errors import DomainError
from resmps.models import init_params, mps_from_sresmps
from resmps.training import train


def test_identity_channel_is_zero():
    q1, _ = channel_norm(np.stack([np.eye(3), np.zeros((3, 3))]))
    assert q1 == 0.0


def test_hand_value():
    T = np.stack([np.eye(2), np.full((2, 2), 0.1)])
    assert channel_norm(T) == pytest.approx((0.0, 0.5), abs=1e-15)


def test_sresmps_profile_via_conversion():
    p = init_params("sresmps", 4, 3, 2, eps=0.1, seed=0)
    prof = channel_norm_profile(p)
    assert prof == channel_norm_profile(mps_from_sresmps(p))
    assert all(q1 == 0.0 for q1, _ in prof)
    assert dominant_channel_fraction(prof) == 1.0
    with pytest.raises(DomainError):
        channel_norm_profile(init_params("aresmps", 2, 2, 2))
    assert channel_norm_tsv(prof).splitlines()[0] == "layer\tq1\tq2"


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31))
def test_permutation_covariance(chi, seed):
    rng = np.random.default_rng(seed)
    T = rng.normal(size=(2, chi, chi)) + np.eye(chi)
    perm = rng.permutation(chi)
    P = T[:, perm][:, :, perm]
    np.testing.assert_allclose(channel_norm(P), channel_norm(T), rtol=1e-12)


def test_trajectory_zero_input(tmp_path):
    p = init_params("sresmps", 5, 3, 2, eps=0.3, seed=0)
    rows = export_trajectory(p, np.zeros(5), [1], tmp_path / "t.tsv")
    lines = (tmp_path / "t.tsv").read_text().splitlines()
    assert rows == 6 and len(lines) == 7
    assert lines[0].split("\t")[:4] == ["sample", "label", "layer", "h_0"]
    for line in lines[1:]:
        assert [float(v) for v in line.split("\t")[3:]] == [1.0, 1.0, 1.0]


def test_trajectory_endpoint_mode(tmp_path):
    p = init_params("aresmps", 5, 3, 2, eps=0.3, seed=0)
    X = np.random.default_rng(0).random((4, 5))
    assert export_trajectory(p, X, [0, 1, 0, 1], tmp_path / "e.tsv", endpoints_only=True) == 4
    assert all(l.split("\t")[2] == "5" for l in (tmp_path / "e.tsv").read_text().splitlines()[1:])


def test_same_class_endpoints_cluster(blobs):
    train_set, test_set = blobs
    cfg = TrainConfig(model="aresmps", chi=6, epochs=4, batch_size=10, lr=3e-3)
    params, _ = train(train_set, cfg)
    within, across = endpoint_spread(params, test_set.features, test_set.labels)
    assert within < across


def test_init_sweep(blobs):
    train_set, test_set = blobs
    cfg = TrainConfig(chi=4, batch_size=15, lr=5e-3, dropout=0.0)
    rows = init_sweep([0.0, 1e-3, 1e12], cfg, train_set, test_set, checkpoints=(1, 2))
    assert [(r.eps, r.epoch) for r in rows] == [(0.0, 1), (0.0, 2), (1e-3, 1), (1e-3, 2),
                                                (1e12, 1), (1e12, 2)]
    assert rows[3].test_acc > 0.8 and not rows[3].diverged
    assert rows[4].diverged and rows[4].test_acc == pytest.approx(1 / 3)
    again = init_sweep([1e-3], cfg, train_set, test_set, checkpoints=(1, 2))
    assert again == rows[2:4]
    assert sweep_tsv(rows).splitlines()[0] == "epsilon\tepoch\ttest_acc\tdiverged"
