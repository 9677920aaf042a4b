"""Run configuration shared by every CLI command.

A JSON file with optional sections; every command-line flag maps to one key::

    {"seed": 0, "threads": 1, "out": "runs/x", "precision": "f32",
     "data":  {"path": "synthetic", "n_classes": 6, "n_channels": 3, ...},
     "model": {"d_model": 64, "n_layers": 4, ...},
     "train": {"epochs": 20, "lr": 1e-4, ...},
     "ablate": {"suite": "directionality", "seeds": [0, 1, 2]},
     "bench": {"lengths": [128, 256, 512, 1024], "batch": 1}}

Validation collects every problem before raising.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .model import ConfigError, ModelConfig
from .train.trainer import TrainConfig

PRECISIONS = ("f32", "f64")
_DATASET_KEYS = ("n_channels", "window", "n_classes")


@dataclass
class DataSection:
    path: str = "synthetic"       # HARW1 file, or "synthetic"
    manifest: str | None = None   # for preprocess: path or built-in name
    input_dir: str | None = None
    overlap: float = 0.5
    n_classes: int = 6            # synthetic generator settings
    n_channels: int = 3
    window: int = 128
    n_per_class: int = 200
    synth_seed: int = 7


@dataclass
class AblateSection:
    suite: str = "directionality"
    seeds: list = field(default_factory=lambda: [0, 1, 2])


@dataclass
class BenchSection:
    lengths: list = field(default_factory=lambda: [128, 256, 512, 1024])
    batch: int = 1
    memory: bool = True


@dataclass
class RunConfig:
    seed: int = 0
    threads: int = 1
    out: str = "runs"
    precision: str = "f32"
    data: DataSection = field(default_factory=DataSection)
    model: dict = field(default_factory=dict)   # ModelConfig fields minus the dataset-derived ones
    train: TrainConfig = field(default_factory=TrainConfig)
    ablate: AblateSection = field(default_factory=AblateSection)
    bench: BenchSection = field(default_factory=BenchSection)

    def model_config(self, n_channels: int, window: int, n_classes: int) -> ModelConfig:
        return ModelConfig(n_channels=n_channels, window=window, n_classes=n_classes, **self.model)

    def train_config(self) -> TrainConfig:
        return replace(self.train, seed=self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"].pop("seed")
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


_SECTIONS = {"data": DataSection, "train": TrainConfig, "ablate": AblateSection, "bench": BenchSection}
_MODEL_KEYS = {f.name: f.default for f in fields(ModelConfig) if f.name not in _DATASET_KEYS}


def _check_type(where: str, value, default, problems: list) -> None:
    if default is None or value is None:
        return
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        problems.append(f"{where}: expected {type(default).__name__}, got {value!r}")


def _section(name: str, cls, raw, problems: list):
    if not isinstance(raw, dict):
        problems.append(f"{name}: expected an object")
        return cls()
    base = cls()
    known = {f.name for f in fields(cls)}
    for k in sorted(set(raw) - known):
        problems.append(f"unknown key '{name}.{k}'")
    for k in sorted(set(raw) & known):
        _check_type(f"{name}.{k}", raw[k], getattr(base, k), problems)
    return cls(**{k: v for k, v in raw.items() if k in known})


def from_dict(d: dict) -> RunConfig:
    problems = []
    if not isinstance(d, dict):
        raise ConfigError(["config: expected a JSON object"])
    top = {f.name for f in fields(RunConfig)}
    for k in sorted(set(d) - top):
        problems.append(f"unknown key {k!r}")
    base = RunConfig()
    kw = {}
    for k in ("seed", "threads", "out", "precision"):
        if k in d:
            _check_type(k, d[k], getattr(base, k), problems)
            kw[k] = d[k]
    if isinstance(d.get("train"), dict) and "seed" in d["train"]:
        problems.append("unknown key 'train.seed' (use the top-level 'seed')")
        d = {**d, "train": {k: v for k, v in d["train"].items() if k != "seed"}}
    for name, cls in _SECTIONS.items():
        if name in d:
            kw[name] = _section(name, cls, d[name], problems)
    if "model" in d:
        raw = d["model"]
        if not isinstance(raw, dict):
            problems.append("model: expected an object")
        else:
            for k in sorted(set(raw) - set(_MODEL_KEYS)):
                hint = " (taken from the dataset)" if k in _DATASET_KEYS else ""
                problems.append(f"unknown key 'model.{k}'{hint}")
            for k in sorted(set(raw) & set(_MODEL_KEYS)):
                _check_type(f"model.{k}", raw[k], _MODEL_KEYS[k], problems)
            kw["model"] = {k: v for k, v in raw.items() if k in _MODEL_KEYS}
    cfg = RunConfig(**kw)
    problems += _validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def _validate(cfg: RunConfig) -> list:
    problems = []
    if cfg.precision not in PRECISIONS:
        problems.append(f"precision must be one of {list(PRECISIONS)}, got {cfg.precision!r}")
    if isinstance(cfg.threads, int) and cfg.threads < 1:
        problems.append("threads must be >= 1")
    t = cfg.train
    for k in ("epochs", "batch_size", "eval_batch_size"):
        v = getattr(t, k)
        if isinstance(v, int) and v < 1:
            problems.append(f"train.{k} must be >= 1")
    if isinstance(t.lr, (int, float)) and t.lr < 0:
        problems.append("train.lr must be >= 0")
    if not 0.0 <= (cfg.data.overlap if isinstance(cfg.data.overlap, (int, float)) else 0.0) < 1.0:
        problems.append("data.overlap must be in [0, 1)")
    if not all(isinstance(L, int) and L > 0 for L in cfg.bench.lengths):
        problems.append("bench.lengths must be positive integers")
    if not cfg.ablate.seeds or not all(isinstance(s, int) for s in cfg.ablate.seeds):
        problems.append("ablate.seeds must be a non-empty list of integers")
    return problems


def load(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError([f"{path}: invalid JSON ({e})"]) from None
    return from_dict(raw)


def with_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    """Apply dotted-key overrides (``{"train.epochs": 5}``) and revalidate."""
    d = cfg.to_dict()
    for key, value in overrides.items():
        if value is None:
            continue
        node = d
        *parents, last = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[last] = value
    return from_dict(d)
