"""Configuration objects and the ``key = value`` run-config format.

A run config is a flat text file with one dotted key per line::

    seed = 0
    model.embed_dim = 256
    model.t2t_kernels = [[7, 4, 2], [3, 2, 1], [3, 2, 1]]
    train.lr0 = 0.0001
    data.train = ["data/duts.tsv", "data/njud.tsv"]

Values are JSON literals. Bare words that are not valid JSON are read as
strings, so ``--set model.norm=batch`` works without quoting.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

CONFIG_FORMAT_VERSION = 1


class ConfigError(ValueError):
    """Raised for invalid or inconsistent configuration values."""


def soft_split_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 224
    in_chans: int = 3
    # (kernel, stride, padding) per soft-split stage
    t2t_kernels: tuple[tuple[int, int, int], ...] = ((7, 4, 2), (3, 2, 1), (3, 2, 1))
    token_dim: int = 48
    t2t_mlp_ratio: float = 1.0
    embed_dim: int = 256
    depth: int = 10
    heads: int = 4
    mlp_ratio: float = 2.0
    qkv_bias: bool = False
    reduced_dim: int = 64
    tfm_depth: int = 5
    tfm_heads: int = 4
    tfm_mlp_ratio: float = 5.0
    cbam_reduction: int = 16
    spatial_kernel: int = 7
    mffm_reduction: int = 4
    use_tfm: bool = True
    use_ffm: bool = True
    use_mffm: bool = True
    norm: str = "layer"
    eps: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        kernels = tuple(tuple(int(v) for v in k) for k in self.t2t_kernels)
        object.__setattr__(self, "t2t_kernels", kernels)
        self.validate()

    def validate(self) -> None:
        if len(self.t2t_kernels) != 3 or any(len(k) != 3 for k in self.t2t_kernels):
            raise ConfigError("t2t_kernels must hold three (kernel, stride, padding) triples")
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.reduced_dim <= 0 or self.token_dim <= 0:
            raise ConfigError("reduced_dim and token_dim must be positive")
        if self.embed_dim % self.heads:
            raise ConfigError(f"embed_dim {self.embed_dim} is not divisible by heads {self.heads}")
        if self.reduced_dim % self.tfm_heads:
            raise ConfigError(
                f"reduced_dim {self.reduced_dim} is not divisible by tfm_heads {self.tfm_heads}")
        if self.tfm_depth < 1:
            raise ConfigError("tfm_depth must be >= 1")
        if self.norm not in ("layer", "batch"):
            raise ConfigError(f"norm must be 'layer' or 'batch', got {self.norm!r}")
        res = self.stage_resolutions
        if any(r <= 0 for r in res):
            raise ConfigError(f"input_size {self.input_size} is too small for t2t_kernels {self.t2t_kernels}")
        if not all(a > b for a, b in zip(res, res[1:])):
            raise ConfigError(f"stage resolutions {res} are not strictly decreasing")

    @property
    def stage_resolutions(self) -> tuple[int, int, int]:
        """Side length of the token grid emitted at each of the three levels."""
        sizes = []
        size = self.input_size
        for k, s, p in self.t2t_kernels:
            size = soft_split_size(size, k, s, p)
            sizes.append(size)
        return tuple(sizes)

    @property
    def ablation(self) -> str:
        if not self.use_tfm and not self.use_ffm and not self.use_mffm:
            return "baseline"
        parts = ["base"]
        for flag, name in ((self.use_tfm, "tfm"), (self.use_ffm, "ffm"), (self.use_mffm, "mffm")):
            if flag:
                parts.append(name)
        return "+".join(parts)

    def config_hash(self) -> str:
        """Digest of every field that shapes the weights (the seed is excluded)."""
        payload = {k: v for k, v in _to_plain(self).items() if k != "seed"}
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


ABLATIONS = {
    "baseline": dict(use_tfm=False, use_ffm=False, use_mffm=False),
    "base+tfm": dict(use_tfm=True, use_ffm=False, use_mffm=False),
    "base+tfm+ffm": dict(use_tfm=True, use_ffm=True, use_mffm=False),
    "base+tfm+ffm+mffm": dict(use_tfm=True, use_ffm=True, use_mffm=True),
}


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-4
    batch_size: int = 16
    total_steps: int = 300_000
    decay_steps: tuple[int, ...] = (100_000, 200_000)
    decay_factor: float = 0.1
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 10_000
    desk_scale: bool = False

    def __post_init__(self):
        object.__setattr__(self, "decay_steps", tuple(int(s) for s in self.decay_steps))
        object.__setattr__(self, "adam_betas", tuple(float(b) for b in self.adam_betas))
        if not self.lr0 > 0:
            raise ConfigError(f"lr0 must be positive, got {self.lr0}")
        steps = self.decay_steps
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ConfigError(f"decay_steps {steps} must be strictly increasing")
        if steps and steps[-1] >= self.total_steps:
            raise ConfigError(f"decay_steps {steps} must lie below total_steps {self.total_steps}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass(frozen=True)
class DataConfig:
    train: tuple[str, ...] = ()
    eval: tuple[str, ...] = ()
    mean: tuple[float, float, float] = (0.485, 0.456, 0.406)
    std: tuple[float, float, float] = (0.229, 0.224, 0.225)
    hflip: bool = False

    def __post_init__(self):
        for name in ("train", "eval"):
            value = getattr(self, name)
            if isinstance(value, str):
                value = (value,)
            object.__setattr__(self, name, tuple(str(v) for v in value))
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        object.__setattr__(self, "std", tuple(float(v) for v in self.std))


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    out: str = "runs"
    seed: int = 0

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed, model=replace(self.model, seed=seed),
                       train=replace(self.train, seed=seed))


DESK_MODEL = dict(input_size=64, token_dim=16, embed_dim=32, depth=2, heads=2,
                  reduced_dim=32, tfm_depth=1, tfm_heads=2, tfm_mlp_ratio=2.0)
DESK_TRAIN = dict(batch_size=4, total_steps=2000, decay_steps=(1000, 1500),
                  checkpoint_every=500)


def desk_scale(cfg: RunConfig | None = None) -> RunConfig:
    """Small preset used for overfit checks and every property test."""
    cfg = cfg or RunConfig()
    return replace(cfg, model=replace(cfg.model, **DESK_MODEL),
                   train=replace(cfg.train, desk_scale=True, **DESK_TRAIN))


# ---------------------------------------------------------------- serialization

_SECTIONS = {"model": ModelConfig, "train": TrainConfig, "data": DataConfig}


def _to_plain(obj) -> dict[str, Any]:
    out = {}
    for f in fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            value = _to_plain(value)
        elif isinstance(value, tuple):
            value = json.loads(json.dumps(value))
        out[f.name] = value
    return out


def flatten(cfg: RunConfig) -> dict[str, Any]:
    flat = {}
    for key, value in _to_plain(cfg).items():
        if isinstance(value, dict):
            for sub, v in value.items():
                flat[f"{key}.{sub}"] = v
        else:
            flat[key] = value
    return flat


def dumps(cfg: RunConfig) -> str:
    lines = [f"# aiosod run config, format {CONFIG_FORMAT_VERSION}"]
    for key, value in flatten(cfg).items():
        lines.append(f"{key} = {json.dumps(value)}")
    return "\n".join(lines) + "\n"


def save(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(dumps(cfg), encoding="utf-8")


def parse_value(text: str) -> Any:
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_lines(lines: Iterable[str], source: str = "<config>") -> dict[str, Any]:
    values = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = parse_value(value)
    return values


def parse_overrides(items: Iterable[str]) -> dict[str, Any]:
    return parse_lines(items, source="--set")


def _coerce(value: Any, current: Any, key: str) -> Any:
    if isinstance(current, bool):
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        return value
    if isinstance(current, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{key}: value must be finite")
        return value
    if isinstance(current, tuple):
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    if isinstance(current, str):
        return str(value)
    return value


def from_dict(values: Mapping[str, Any], base: RunConfig | None = None) -> RunConfig:
    """Build a RunConfig from dotted keys, starting at ``base``.

    ``train.desk_scale = true`` switches the starting point to the desk preset
    before the remaining keys are applied, so explicit keys always win.
    """
    base = base or RunConfig()
    if _truthy(values.get("train.desk_scale")) and not base.train.desk_scale:
        base = desk_scale(base)
    sections = {name: {} for name in _SECTIONS}
    top = {}
    known_top = {f.name for f in fields(RunConfig)} - set(_SECTIONS)
    for key, value in values.items():
        head, _, tail = key.partition(".")
        if head in _SECTIONS and tail:
            section = getattr(base, head)
            if tail not in {f.name for f in fields(section)}:
                raise ConfigError(f"unknown config key {key!r}")
            sections[head][tail] = _coerce(value, getattr(section, tail), key)
        elif key in known_top:
            top[key] = _coerce(value, getattr(base, key), key)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        parts = {name: replace(getattr(base, name), **sections[name]) for name in _SECTIONS}
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return replace(base, **parts, **top)


def _truthy(value) -> bool:
    if isinstance(value, str):
        return value.lower() == "true"
    return bool(value)


def loads(text: str, overrides: Mapping[str, Any] | None = None, source: str = "<config>") -> RunConfig:
    values = parse_lines(text.splitlines(), source)
    values.update(overrides or {})
    return from_dict(values)


def load(path: str | Path | None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    if path is None:
        return from_dict(dict(overrides or {}))
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return loads(path.read_text(encoding="utf-8"), overrides, source=str(path))
