"""Experiment configuration: YAML files, named presets, content hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from ..metrics import PROTOCOLS
from .schedules import ScheduleSpec

FAMILIES = ("pointer", "seq2seq")
OPTIMIZERS = ("adam", "adamw")

_FULL_STEP = {"kind": "step_decay", "base_lr": 1e-4, "total_iters": 24000,
               "milestones": [14000, 19000], "factor": 0.1}
_FULL_WARMUP = {"kind": "warmup_linear", "base_lr": 1e-4, "peak_lr": 1e-3,
                 "warmup_iters": 1000, "total_iters": 24000}

PRESETS = {
    "m4c-24k-b128": {
        "family": "pointer", "flavor": "mono", "optimizer": "adam",
        "max_iter": 24000, "batch_size": 128, "schedule": _FULL_STEP,
    },
    "m5c-24k-b128": {
        "family": "pointer", "flavor": "multi", "optimizer": "adam",
        "max_iter": 24000, "batch_size": 128, "schedule": _FULL_STEP,
    },
    "seq2seq-stvqa-24k-b128": {
        "family": "seq2seq", "flavor": "multi", "optimizer": "adamw",
        "max_iter": 24000, "batch_size": 128, "schedule": _FULL_WARMUP,
    },
    "seq2seq-textvqa-48k-b64": {
        "family": "seq2seq", "flavor": "multi", "optimizer": "adamw",
        "max_iter": 48000, "batch_size": 64,
        "schedule": {**_FULL_WARMUP, "total_iters": 48000},
    },
    # Desk scale keeps the schedule shapes and shrinks everything else.
    "desk-pointer": {
        "family": "pointer", "flavor": "multi", "optimizer": "adam",
        "max_iter": 2000, "batch_size": 16,
        "schedule": {**_FULL_STEP, "base_lr": 1e-3},
    },
    "desk-seq2seq": {
        "family": "seq2seq", "flavor": "multi", "optimizer": "adamw",
        "max_iter": 2000, "batch_size": 16, "schedule": _FULL_WARMUP,
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one training run and its evaluations.

    ``split`` names a saved split file; without one the split is built from
    ``train_languages``/``zeroshot_languages`` with ``seed``. ``model`` holds
    extra estimator keyword arguments (``d_model``, ``n_layers``, ...).
    """

    manifest: str
    family: str = "pointer"
    flavor: str = "multi"
    name: str = "run"
    split: str | None = None
    train_languages: tuple[str, ...] = ("en", "ca", "es", "zh")
    zeroshot_languages: tuple[str, ...] = ()
    val_fraction: float = 0.2
    schedule: ScheduleSpec | None = None
    optimizer: str | None = None
    batch_size: int = 16
    max_iter: int = 2000
    seed: int = 0
    protocol: str = "iid"
    backends: tuple[str, ...] = ()
    model: dict = field(default_factory=dict)
    checkpoint_every: int = 0
    loss_sample_every: int = 10

    def __post_init__(self):
        for name in ("train_languages", "zeroshot_languages", "backends"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if isinstance(self.schedule, dict):
            object.__setattr__(self, "schedule", ScheduleSpec.from_dict(self.schedule))
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.flavor not in ("mono", "multi"):
            raise ValueError(f"flavor must be mono or multi, got {self.flavor!r}")
        if self.optimizer is not None and self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.max_iter <= 0 or self.batch_size <= 0:
            raise ValueError("max_iter and batch_size must be positive")
        if not isinstance(self.seed, int):
            raise ValueError("seed must be a fixed integer")
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.protocol == "zeroshot" and not self.zeroshot_languages and self.split is None:
            raise ValueError("zeroshot protocol needs zeroshot_languages or a split file")
        if self.protocol == "robustness" and not self.backends:
            raise ValueError("robustness protocol needs at least one backend")

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("train_languages", "zeroshot_languages", "backends"):
            d[name] = list(d[name])
        d["schedule"] = self.schedule.to_dict() if self.schedule else None
        return d

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        d = dict(d)
        preset = d.pop("preset", None)
        if preset is not None:
            if preset not in PRESETS:
                raise ValueError(f"unknown preset {preset!r}; known: {sorted(PRESETS)}")
            d = {**PRESETS[preset], **d}
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys {unknown}")
        return cls(**d)

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text(encoding="utf-8")
        data = yaml.safe_load(text) or {}
        base = Path(path).parent
        for key in ("manifest", "split"):
            if data.get(key) and not Path(data[key]).is_absolute():
                data[key] = str(base / data[key])
        return cls.from_dict(data)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, allow_unicode=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_yaml(), encoding="utf-8")

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def estimator_params(self) -> dict:
        params = dict(self.model)
        params.update(flavor=self.flavor, max_iter=self.max_iter, batch_size=self.batch_size,
                      seed=self.seed, optimizer=self.optimizer, schedule=self.schedule)
        return params
