"""Flat ``key = value`` run configuration with command-line overrides and a stable hash."""

from __future__ import annotations

import argparse
import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .encoder import EncoderConfig
from .pipeline import SETTINGS, VARIANTS, ScalabilitySetting
from .pose.data import PROFILES
from .training import MODES, TrainConfig


class ConfigError(ValueError):
    pass


# Keys that only route output and never change a result.
_UNHASHED = ("out", "log_level")


@dataclass
class RunConfig:
    # data
    data: str = ""
    profile: str = "jpl"
    scenarios: int = 200
    window: int = 10
    augment: int = 4
    data_seed: int = 0
    noise_min: float = 0.02
    noise_max: float = 0.06
    degradation_max: float = 0.25
    # run
    seed: int = 0
    out: str = "runs"
    checkpoint: str = ""
    from_scratch: bool = False
    log_level: str = "WARNING"
    # encoder and pretraining
    spatial_layers: int = 2
    spatial_heads: int = 4
    spatial_width: int = 32
    temporal_layers: int = 2
    temporal_heads: int = 4
    temporal_width: int = 64
    repr_dim: int = 32
    mask_ratio: float = 0.5
    decoder_layers: int = 1
    pretrain_epochs: int = 15
    pretrain_lr: float = 2e-3
    pretrain_warmup: int = 2
    pretrain_loss: str = "weighted_mse"
    # classifier
    variant: str = "socialldg"
    edge_bias: bool = True
    prompt_injection: bool = True
    mask_future_edges: bool = True
    heads: int = 4
    hidden_dim: int = 32
    attention: str = "sigmoid"
    token_init: str = "lexical"
    # fine-tuning
    mode: str = "temporal"
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.01
    warmup: int = 5
    decay: float = 0.5
    decay_patience: int = 3
    stop_patience: int = 10
    loss_weighting: str = "class_count"
    # scalability
    setting: str = "A"
    shared_lr_scale: float = 0.01
    initial_loss_weight: float = 0.5
    finetune_epochs: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}; expected one of {sorted(PROFILES)}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {sorted(VARIANTS)}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.setting not in SETTINGS:
            raise ConfigError(f"unknown setting {self.setting!r}; expected A, B or C")

    # -- views --------------------------------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}
        return hashlib.sha256(json.dumps(d, sort_keys=True, separators=(",", ":")).encode()).hexdigest()

    def encoder_config(self) -> EncoderConfig:
        names = {f.name for f in fields(EncoderConfig)} - {"num_nodes"}
        return EncoderConfig(**{n: getattr(self, n) for n in names})

    def train_config(self, seed: int | None = None, epochs: int | None = None) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        kw = {n: getattr(self, n) for n in names}
        if seed is not None:
            kw["seed"] = seed
        if epochs is not None:
            kw["epochs"] = epochs
        return TrainConfig(**kw)

    def graph_options(self) -> dict:
        return {
            "edge_bias": self.edge_bias,
            "prompt_injection": self.prompt_injection,
            "mask_future_edges": self.mask_future_edges,
            "heads": self.heads,
            "hidden_dim": self.hidden_dim,
            "attention": self.attention,
        }

    def scalability_setting(self) -> ScalabilitySetting:
        return ScalabilitySetting.named(
            self.setting,
            shared_lr_scale=self.shared_lr_scale,
            initial_loss_weight=self.initial_loss_weight,
            finetune_epochs=self.finetune_epochs,
        )

    def generator_options(self) -> dict:
        return {
            "window": self.window,
            "noise": (self.noise_min, self.noise_max),
            "degradation": (0.0, self.degradation_max),
        }


_FIELDS = {f.name: f for f in fields(RunConfig)}
_DEFAULTS = RunConfig()


def parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def coerce(key: str, value):
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    kind = type(getattr(_DEFAULTS, key))
    try:
        if kind is bool:
            return parse_bool(value)
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key!r}: cannot read {value!r} as {kind.__name__}") from None


def read_config_file(path) -> dict:
    """``key = value`` per line; ``#`` starts a comment; blank lines are ignored."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            out[key] = coerce(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return out


def write_config_file(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.write_text("".join(f"{k} = {str(v).lower() if isinstance(v, bool) else v}\n" for k, v in cfg.to_dict().items()))
    return path


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    """One ``--key`` option per config field, defaulting to "not given"."""
    parser.add_argument("--config", help="flat key = value config file")
    for name in _FIELDS:
        flag = "--" + name.replace("_", "-")
        if isinstance(getattr(_DEFAULTS, name), bool):
            parser.add_argument(flag, dest=name, nargs="?", const=True, default=None, type=parse_bool, metavar="BOOL")
            parser.add_argument("--no-" + name.replace("_", "-"), dest=name, action="store_const", const=False)
        else:
            parser.add_argument(flag, dest=name, default=None, type=str)


def config_from_args(args: argparse.Namespace, **fixed) -> RunConfig:
    """Defaults, then the config file, then explicit flags, then ``fixed``."""
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for name in _FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = coerce(name, v)
    values.update(fixed)
    return RunConfig(**values)
