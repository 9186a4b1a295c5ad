"""Training configuration and strict JSON config loading."""

import dataclasses
import json
from dataclasses import dataclass

from .errors import ConfigError

MODELS = ("sresmps", "aresmps", "mps")
OPTIMIZERS = ("adam", "sgd")
FEATURE_MAPS = ("affine", "norm_one")
ACTIVATIONS = ("relu", "none")


@dataclass
class TrainConfig:
    model: str = "sresmps"
    chi: int = 40
    epochs: int = 30
    batch_size: int = 100
    lr: float = 1e-4
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    dropout: float = 0.1
    eps_init: float = 1e-3
    seed: int = 0
    feature_map: str = "affine"  # MPS only
    activation: str = "relu"  # aResMPS only
    subset: int = None  # down-sample images to this many features
    train_limit: int = None
    test_limit: int = None
    grad_chunk: int = 0  # rows per gradient work unit; 0 = whole batch

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("chi", "epochs", "batch_size"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be a positive integer")
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if self.feature_map not in FEATURE_MAPS:
            raise ConfigError(f"feature_map must be one of {FEATURE_MAPS}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.eps_init < 0:
            raise ConfigError("eps_init must be non-negative")
        if self.grad_chunk < 0:
            raise ConfigError("grad_chunk must be non-negative")
        for name in ("subset", "train_limit", "test_limit"):
            value = getattr(self, name)
            if value is not None and (not isinstance(value, int) or value <= 0):
                raise ConfigError(f"{name} must be a positive integer or null")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}


def from_mapping(values, base=None):
    unknown = sorted(set(values) - FIELDS)
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")
    base = base or TrainConfig()
    fixed = {}
    for key, value in values.items():
        default = getattr(TrainConfig, key, None)
        if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        fixed[key] = value
    return base.replace(**fixed)


def load_config(path=None, overrides=None):
    """Read a flat JSON object; ``overrides`` (e.g. CLI flags) win over the file."""
    values = {}
    if path is not None:
        with open(path) as f:
            text = f.read()
        if text.strip():
            try:
                values = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        for key, value in values.items():
            if isinstance(value, (dict, list)):
                raise ConfigError(f"{path}: key {key!r} must hold a scalar")
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return from_mapping(values)
