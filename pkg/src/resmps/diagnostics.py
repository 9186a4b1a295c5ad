"""Channel norms, hidden-state trajectories and initialization sweeps."""

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, DomainError
from .models import MPS, ModelKind, forward, mps_from_sresmps
from .training import train


def channel_norm(core):
    """Mean absolute deviation from the identity of each channel of a (2, chi, chi) core.

    ``q_p = sum_jk |T[p, j, k] - delta_jk| / chi^2``; the identity is
    subtracted in both channels.
    """
    core = np.asarray(core, dtype=np.float64)
    if core.ndim != 3 or core.shape[1] != core.shape[2]:
        raise DomainError(f"expected a (channels, chi, chi) core, got {core.shape}")
    chi = core.shape[1]
    dev = np.abs(core - np.eye(chi)[None])
    q = dev.sum(axis=(1, 2)) / chi ** 2
    return tuple(float(v) for v in q)


def channel_norm_profile(params):
    """``[(q1, q2), ...]`` for every layer; sResMPS models are converted first."""
    if params.kind is ModelKind.SRESMPS:
        params = mps_from_sresmps(params)
    if not isinstance(params, MPS):
        raise DomainError("channel norms are defined for two-channel MPS cores")
    return [channel_norm(core) for core in params.cores]


def dominant_channel_fraction(profile, channel=1):
    """Fraction of layers whose ``channel`` (0-based) has the strictly larger norm."""
    if not profile:
        return 0.0
    other = 1 - channel
    return sum(1 for q in profile if q[channel] > q[other]) / len(profile)


def channel_norm_tsv(profile):
    lines = ["layer\tq1\tq2"]
    lines += [f"{n + 1}\t{q1:.10g}\t{q2:.10g}" for n, (q1, q2) in enumerate(profile)]
    return "\n".join(lines) + "\n"


def export_trajectory(params, features, labels, out, endpoints_only=False):
    """Write hidden states of each sample as TSV rows ``sample label layer h_0 .. h_{chi-1}``.

    Full mode writes layers 0..N for every sample, endpoint mode only
    layer N. Returns the number of data rows written.
    """
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels))
    _, states = forward(params, X, mode="eval", trace=True)
    layers = [len(states) - 1] if endpoints_only else range(len(states))
    header = "sample\tlabel\tlayer\t" + "\t".join(f"h_{i}" for i in range(params.chi))
    rows = 0
    with open(out, "w") as f:
        f.write(header + "\n")
        for s in range(X.shape[0]):
            for n in layers:
                values = "\t".join(f"{v:.10g}" for v in states[n][s])
                f.write(f"{s}\t{int(labels[s])}\t{n}\t{values}\n")
                rows += 1
    return rows


def endpoint_spread(params, features, labels):
    """Mean pairwise endpoint distance within classes and across classes."""
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels)
    _, states = forward(params, X, mode="eval", trace=True)
    E = states[-1]
    sq = (E * E).sum(axis=1)
    D = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * E @ E.T, 0.0))
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(len(labels), dtype=bool)
    return float(D[same & off].mean()), float(D[~same].mean())


@dataclass
class SweepRow:
    eps: float
    epoch: int
    test_acc: float
    diverged: bool


def init_sweep(eps_values, cfg, train_set, test_set, checkpoints=(10, 20, 50)):
    """Train a fresh sResMPS per init scale and record test accuracy at ``checkpoints``.

    A diverged run (non-finite loss or parameters) is reported at the
    random-guess accuracy ``1 / C`` for every checkpoint it did not reach.
    """
    checkpoints = sorted(int(c) for c in checkpoints)
    guess = 1.0 / train_set.n_classes
    rows = []
    for eps in eps_values:
        if eps < 0:
            raise DomainError("init scales must be non-negative")
        run_cfg = cfg.replace(eps_init=float(eps), epochs=checkpoints[-1])
        seen = {}

        def record(m, _params):
            if m.epoch in checkpoints:
                seen[m.epoch] = m.test_acc

        diverged = False
        try:
            train(train_set, run_cfg, test_set=test_set, on_epoch=record)
        except DivergenceError:
            diverged = True
        for c in checkpoints:
            rows.append(SweepRow(float(eps), c, seen.get(c, guess), diverged and c not in seen))
    return rows


def sweep_tsv(rows):
    lines = ["epsilon\tepoch\ttest_acc\tdiverged"]
    lines += [f"{r.eps:.6g}\t{r.epoch}\t{r.test_acc:.6f}\t{int(r.diverged)}" for r in rows]
    return "\n".join(lines) + "\n"
