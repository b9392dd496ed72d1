"""Flat ``key=value`` experiment configuration with a content digest."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .encoder import EncoderConfig
from .sampling import SamplerConfig
from .trainer import ConfigError, LossConfig, TrainConfig

# key -> default; the default's type is the key's type.
DEFAULTS: dict[str, object] = {
    "data": "",
    "out": "",
    "seed": 0,
    "corpus.k_core": 5,
    "encoder.max_len": 50,
    "encoder.dim": 64,
    "encoder.layers": 2,
    "encoder.heads": 1,
    "encoder.dropout": 0.2,
    "encoder.dtype": "float64",
    "train.batch_size": 256,
    "train.learning_rate": 0.0003,
    "train.epochs": 200,
    "train.beta1": 0.9,
    "train.beta2": 0.999,
    "train.eps": 1e-8,
    "train.weight_decay": 0.0,
    "train.eval_every": 1,
    "train.early_stop_patience": 20,
    "train.optimizer": "adam",
    "train.max_steps": 0,
    "sampler.kind": "auto",
    "sampler.mode": "pop",
    "sampler.transitivity": "weak",
    "sampler.alpha": 1.0,
    "sampler.n_j": 50,
    "sampler.n_k": 50,
    "sampler.exclude_history": False,
    "sampler.seed": 0,
    "sampler.max_retries": 100,
    "loss.name": "bpr",
    "loss.gamma": 1.0,
    "eval.k": 10,
    "eval.exclude_history": False,
    "eval.chunk_size": 256,
}

# Where outputs go does not change what is computed.
NOT_DIGESTED = ("out",)

_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


def _coerce(key: str, value):
    default = DEFAULTS[key]
    if isinstance(value, str):
        value = value.strip()
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            v = str(value).lower()
            if v in _TRUE:
                return True
            if v in _FALSE:
                return False
            raise ValueError
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot read {value!r} as {type(default).__name__}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))

    @classmethod
    def from_dict(cls, items: dict) -> "ExperimentConfig":
        return cls().with_overrides(items)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls().with_overrides(parse_lines(Path(path).read_text(encoding="utf-8").splitlines(), str(path)))

    def with_overrides(self, items: dict) -> "ExperimentConfig":
        unknown = sorted(set(items) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        merged = dict(self.values)
        merged.update({k: _coerce(k, v) for k, v in items.items()})
        return ExperimentConfig(merged)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def digest(self) -> str:
        payload = {k: v for k, v in sorted(self.values.items()) if k not in NOT_DIGESTED}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def to_text(self) -> str:
        lines = [f"# config_digest={self.digest}"]
        lines += [f"{k}={_fmt(v)}" for k, v in sorted(self.values.items())]
        return "\n".join(lines) + "\n"

    def _group(self, prefix: str) -> dict:
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def encoder(self, n_items: int) -> EncoderConfig:
        try:
            return EncoderConfig(n_items=n_items, **self._group("encoder."))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def train(self) -> TrainConfig:
        return TrainConfig(seed=self["seed"], **self._group("train."))

    def sampler(self) -> SamplerConfig:
        group = self._group("sampler.")
        group.pop("kind")
        try:
            return SamplerConfig(**group)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def loss(self) -> LossConfig:
        return LossConfig(**self._group("loss."))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def parse_lines(lines, source: str = "<config>") -> dict:
    """``key=value`` per line; ``#`` starts a comment line."""
    out = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_overrides(args) -> dict:
    """Accept ``--key=value`` and bare ``key=value`` tokens."""
    out = {}
    for a in args:
        token = a[2:] if a.startswith("--") else a
        if "=" not in token:
            raise ConfigError(f"override {a!r} is not key=value")
        key, value = token.split("=", 1)
        out[key.strip()] = value
    return out
