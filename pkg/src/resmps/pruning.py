"""Global magnitude pruning of residual parameters and masked retraining.

The readout head is never pruned. Parameters are ranked in one global pool
in checkpoint order (layer by layer, row-major inside each layer).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .models import accuracy, residual_parameter_count
from .training import train


def _layer_major(params):
    """(N, per_layer) view of all residual parameters, in checkpoint order."""
    arrays = params._layer_arrays()
    N = params.n_features
    return np.concatenate([a.reshape(N, -1) for a in arrays.values()], axis=1)


def _unflatten(params, flat):
    arrays = params._layer_arrays()
    N = params.n_features
    rows = flat.reshape(N, -1)
    out, start = {}, 0
    for name, a in arrays.items():
        width = a.size // N if N else 0
        out[name] = rows[:, start:start + width].reshape(a.shape)
        start += width
    return out


def magnitude_mask(params, keep):
    """Keep the ``keep`` largest-magnitude residual entries.

    Ties are resolved in favour of the earlier entry (lower layer index,
    then row-major position). Returns ``{name: bool array}``.
    """
    total = residual_parameter_count(params)
    if not 0 < keep <= total:
        raise DomainError(f"live count {keep} outside (0, {total}]")
    flat = np.abs(_layer_major(params)).ravel()
    order = np.argsort(-flat, kind="stable")
    live = np.zeros(flat.size, dtype=bool)
    live[order[:keep]] = True
    return _unflatten(params, live)


def live_count(mask):
    return int(sum(int(m.sum()) for m in mask.values()))


def geometric_schedule(total, steps=10, final_fraction=0.01):
    """``steps`` live counts from ``total`` down to ``final_fraction * total``."""
    if steps < 1:
        raise DomainError("schedule needs at least one step")
    ratios = np.geomspace(1.0, final_fraction, steps) if steps > 1 else np.ones(1)
    out = []
    for r in ratios:
        m = max(1, int(round(total * r)))
        if out and m >= out[-1]:
            m = out[-1] - 1
        if m < 1:
            break
        out.append(m)
    return out


@dataclass
class PruneStep:
    live: int
    train_acc: float
    test_acc: float


def prune_and_retrain(params, schedule, cfg, train_set, test_set=None, on_step=None):
    """Alternate pruning and masked retraining along a decreasing schedule.

    At each step the mask is recomputed from the current parameters, the
    survivors are retrained for ``cfg.epochs`` epochs and the accuracies
    recorded. Returns ``(steps, final_params, final_mask)``.
    """
    schedule = [int(m) for m in schedule]
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise DomainError("pruning schedule must be strictly decreasing")
    steps, mask = [], None
    for i, M in enumerate(schedule):
        mask = magnitude_mask(params, M)
        step_cfg = cfg.replace(seed=cfg.seed + i)
        params, _ = train(train_set, step_cfg, mask=mask, params=params)
        step = PruneStep(M, accuracy(params, train_set),
                         accuracy(params, test_set) if test_set is not None else float("nan"))
        steps.append(step)
        if on_step is not None:
            on_step(step, params)
    return steps, params, mask


def report_tsv(steps):
    lines = ["M\ttrain_acc\ttest_acc"]
    lines += [f"{s.live}\t{s.train_acc:.6f}\t{s.test_acc:.6f}" for s in steps]
    return "\n".join(lines) + "\n"
