"""Experiment configuration and its flat ``key = value`` file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .metrics import EvalProtocol
from .networks import MlpSpec, discriminator_spec, generator_spec, statistics_spec
from .objectives import ObjectiveKind


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dataset: str = "ring"
    variant: str = "vgan"
    lam: float = 0.1
    gp_weight: float = 10.0
    g_style: str = "non-saturating"
    clip_mode: str = "adaptive"
    ema_decay: float = 0.99
    latent_dim: int = 2
    latent_prior: str = "normal"
    g_hidden: tuple = (128, 128)
    d_hidden: tuple = (128, 128)
    m_hidden: tuple = (128,)
    leaky_slope: float = 0.2
    batch_size: int = 64
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    d_steps: int = 0  # 0 selects the variant default: 1 for vgan, 5 for wgan
    m_steps: int = 1
    epochs: int = 400
    train_size: int = 100_000
    iters_per_epoch: int = 0  # 0 means one pass over the training set
    eval_every: int = 1
    eval_n: int = 2500
    eval_repeats: int = 5
    sigma: float = -1.0  # negative keeps the dataset default
    seed: int = 0
    output_dir: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.dataset not in ("ring", "grid"):
            raise ConfigError(f"dataset must be 'ring' or 'grid', got {self.dataset!r}")
        try:
            self.objective
            self.eval_protocol
            self.g_spec, self.d_spec, self.m_spec
        except ValueError as err:
            raise ConfigError(str(err)) from None
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        for name in ("latent_dim", "m_steps", "train_size", "eval_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("epochs", "d_steps", "iters_per_epoch"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ConfigError("ema_decay must lie in [0, 1)")
        if self.latent_prior not in ("normal", "uniform"):
            raise ConfigError(f"unknown latent_prior {self.latent_prior!r}")

    @property
    def objective(self) -> ObjectiveKind:
        return ObjectiveKind(self.variant, self.lam, self.gp_weight, self.g_style, self.clip_mode)

    @property
    def eval_protocol(self) -> EvalProtocol:
        return EvalProtocol(self.eval_n, self.eval_repeats)

    @property
    def discriminator_steps(self) -> int:
        if self.d_steps:
            return self.d_steps
        return 5 if self.objective.base == "wgan" else 1

    @property
    def iterations_per_epoch(self) -> int:
        if self.iters_per_epoch:
            return self.iters_per_epoch
        return -(-self.train_size // self.batch_size)

    @property
    def g_spec(self) -> MlpSpec:
        spec = generator_spec(self.latent_dim, self.g_hidden)
        return dataclasses.replace(spec, alpha=self.leaky_slope)

    @property
    def d_spec(self) -> MlpSpec:
        return dataclasses.replace(discriminator_spec(self.d_hidden), alpha=self.leaky_slope)

    @property
    def m_spec(self) -> MlpSpec:
        return dataclasses.replace(statistics_spec(self.latent_dim, self.m_hidden), alpha=self.leaky_slope)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, raw: str):
    default = _FIELDS[name].default
    raw = raw.strip()
    try:
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    return raw


def parse_overrides(pairs: dict) -> dict:
    out = {}
    for key, raw in pairs.items():
        name = key.replace("-", "_")
        if name not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        out[name] = raw if not isinstance(raw, str) else _coerce(name, raw)
    return out


def parse_config_text(text: str) -> dict:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value
    return parse_overrides(pairs)


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Build a config from an optional file, then apply ``overrides`` on top."""
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    values.update(parse_overrides(overrides))
    return ExperimentConfig(**values)
