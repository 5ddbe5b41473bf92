"""Run configuration: nested dataclasses, JSON files and dotted overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any

METHODS = ("msn", "hmsn", "hmsn-ip")
PROJECTORS = ("euclidean", "hyperbolic")
FORMATS = ("cifar10-binary", "raw-tensor", "synthetic-tree")


class ConfigError(ValueError):
    pass


@dataclass
class EncoderSection:
    image_size: int = 32
    patch_size: int = 4
    depth: int = 4
    width: int = 96
    heads: int = 4
    mlp_ratio: float = 2.0


@dataclass
class ViewRecipe:
    random_views: int = 1
    focal_views: int = 2
    keep_ratio: float = 0.5
    focal_block: list[int] = field(default_factory=lambda: [2, 2])
    flip: bool = True
    crop_pad: int = 2


@dataclass
class OptimSection:
    lr: float = 1e-3
    lr_proto: float = 1e-2
    weight_decay: float = 0.04
    warmup_frac: float = 0.1
    ema_start: float = 0.996
    ema_end: float = 1.0
    grad_clip: float = 0.0


@dataclass
class DataSection:
    format: str = "synthetic-tree"
    path: str = ""
    tree_depth: int = 2
    branching: int = 4
    per_class: int = 500
    latent_dim: int = 24
    noise: float = 0.5
    seed: int = 0
    limit: int = 0
    sha256: str = ""


@dataclass
class RunConfig:
    method: str = "hmsn-ip"
    projector: str = "hyperbolic"
    curvature: float = 1.0
    dim: int = 16
    head_hidden: int = 64
    num_prototypes: int = 64
    proto_std: float = 0.01
    tau: float = 0.1
    tau_plus: float = 0.025
    lam: float = 1.0
    beta: float = 0.1
    clip_radius: float = 2.3
    batch_size: int = 256
    epochs: int = 100
    steps: int = 0
    seed: int = 0
    output_dir: str = "runs/default"
    log_every: int = 1
    checkpoint_every: int = 1000
    encoder: EncoderSection = field(default_factory=EncoderSection)
    views: ViewRecipe = field(default_factory=ViewRecipe)
    optim: OptimSection = field(default_factory=OptimSection)
    data: DataSection = field(default_factory=DataSection)

    def validate(self, check_paths: bool = False) -> "RunConfig":
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.projector not in PROJECTORS:
            raise ConfigError(f"projector must be one of {PROJECTORS}")
        if self.method == "msn" and self.projector != "euclidean":
            raise ConfigError("the Euclidean MSN baseline has no hyperbolic projector")
        if self.method == "hmsn-ip" and self.curvature != 1.0:
            raise ConfigError("hmsn-ip uses ideal points of the unit ball: curvature must be 1")
        if self.curvature <= 0:
            raise ConfigError("curvature must be positive")
        if not 0 < self.tau_plus < self.tau < 1:
            raise ConfigError("temperatures must satisfy 0 < tau_plus < tau < 1")
        if self.num_prototypes < 2 or self.dim < 2:
            raise ConfigError("need K > 1 prototypes and dim >= 2")
        if self.lam < 0 or self.beta < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2 (batch norm in the projector)")
        if self.views.random_views + self.views.focal_views < 1:
            raise ConfigError("need at least one anchor view")
        if self.data.format not in FORMATS:
            raise ConfigError(f"data.format must be one of {FORMATS}")
        if check_paths and self.data.format != "synthetic-tree" and not os.path.exists(self.data.path):
            raise ConfigError(f"dataset path {self.data.path!r} does not exist")
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        return _build(cls, d)


def _build(klass, d: dict[str, Any]):
    kwargs = {}
    fields = {f.name: f for f in dataclasses.fields(klass)}
    for k, v in d.items():
        if k not in fields:
            raise ConfigError(f"unknown config key {k!r} for {klass.__name__}")
        sub = _SECTIONS.get(k)
        kwargs[k] = _build(sub, v) if sub is not None and isinstance(v, dict) else v
    return klass(**kwargs)


_SECTIONS = {"encoder": EncoderSection, "views": ViewRecipe, "optim": OptimSection, "data": DataSection}


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply ``a.b=value`` strings; values are parsed as JSON when possible."""
    d = cfg.to_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        node = d
        parts = key.strip().split(".")
        for p in parts[:-1]:
            if p not in node or not isinstance(node[p], dict):
                raise ConfigError(f"unknown config section {p!r}")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = _parse_value(raw)
    return RunConfig.from_dict(d)


def load_config(path: str | None = None, overrides: list[str] | None = None) -> RunConfig:
    cfg = RunConfig()
    if path:
        with open(path) as fh:
            cfg = RunConfig.from_dict(json.load(fh))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg.validate()


def total_steps(cfg: RunConfig, dataset_size: int) -> int:
    if cfg.steps > 0:
        return cfg.steps
    return max(1, cfg.epochs * (dataset_size // cfg.batch_size))
