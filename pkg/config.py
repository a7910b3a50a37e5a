"""
Pipeline configuration.

A single dotenv-style file drives every stage. Keys are grouped into sections
by prefix (DATA_, SCREW_, DH_, IK_, RETARGET_, TRAIN_, VOO_, LATENT_, RUN_);
the remainder of the key is the field name, e.g. VOO_P_GLOBAL=0.55.
Process environment variables override the file, CLI flags override both.
"""

import math
import os
from dataclasses import dataclass, field, fields, replace, asdict
from typing import Dict, Optional, Tuple, get_type_hints

import numpy as np
from dotenv import dotenv_values

from errors import ConfigError


@dataclass(frozen=True)
class DataConfig:
    records_dir: str = "data/robots"
    motions: Tuple[str, ...] = ()
    output_root: str = "runs"
    representation: str = "screw"  # screw | dh


@dataclass(frozen=True)
class ScrewConfig:
    epsilon: float = 0.5
    missing_threshold: float = 1e-2
    asymmetry_tolerance: float = 0.05


@dataclass(frozen=True)
class DhConfig:
    clamp_threshold: float = 0.01
    activity_tolerance: float = 1e-2


@dataclass(frozen=True)
class IkParams:
    damping: float = 1e-2
    max_iters: int = 200
    tol: float = 1e-5
    joint_limit: float = math.pi

    def __post_init__(self):
        if self.damping <= 0:
            raise ConfigError(f"IK_DAMPING must be positive, got {self.damping}")
        if self.max_iters < 1:
            raise ConfigError(f"IK_MAX_ITERS must be >= 1, got {self.max_iters}")


@dataclass(frozen=True)
class RetargetConfig:
    lambda_joint: float = 3.5
    per_frame_alignment: bool = False
    report_scale: float = 100.0
    stride: int = 1
    max_frames: int = 0  # 0 keeps every frame
    axis_order: str = "zxy"


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 1000
    batch: int = 10
    iso_weight: float = 1e-7
    mix_lo: float = -0.2
    mix_hi: float = 1.2
    seed: int = 0
    latent_dim: int = 2
    hidden: Tuple[int, ...] = (64, 32)
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"TRAIN_LR must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ConfigError(f"TRAIN_EPOCHS must be >= 1, got {self.epochs}")
        if self.batch < 1:
            raise ConfigError(f"TRAIN_BATCH must be >= 1, got {self.batch}")

    @property
    def mix_range(self) -> Tuple[float, float]:
        return (self.mix_lo, self.mix_hi)


@dataclass(frozen=True)
class VooConfig:
    box_lo: float = -15.0
    box_hi: float = 15.0
    dim: int = 2
    p_global: float = 0.55
    sigma_c: float = 0.6
    n_switch: int = 20
    max_inner: int = 500
    n_init: int = 16
    iters: int = 30
    seed: int = 123456789

    def __post_init__(self):
        if not 0.0 <= self.p_global <= 1.0:
            raise ConfigError(f"VOO_P_GLOBAL must lie in [0, 1], got {self.p_global}")
        if self.n_init < 1:
            raise ConfigError(f"VOO_N_INIT must be >= 1, got {self.n_init}")
        if not self.box_lo < self.box_hi:
            raise ConfigError(f"Empty search box [{self.box_lo}, {self.box_hi}]")

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.full(self.dim, self.box_lo), np.full(self.dim, self.box_hi)


@dataclass(frozen=True)
class LatentConfig:
    k: int = 5
    kmeans_max_iters: int = 100
    strip_steps: int = 8


@dataclass(frozen=True)
class RunConfig:
    n_runs: int = 10
    master_seed: int = 123456789
    workers: int = 1


SECTIONS = {
    "DATA": ("data", DataConfig),
    "SCREW": ("screw", ScrewConfig),
    "DH": ("dh", DhConfig),
    "IK": ("ik", IkParams),
    "RETARGET": ("retarget", RetargetConfig),
    "TRAIN": ("train", TrainConfig),
    "VOO": ("voo", VooConfig),
    "LATENT": ("latent", LatentConfig),
    "RUN": ("run", RunConfig),
}


@dataclass(frozen=True)
class PipelineConfig:
    data: DataConfig = field(default_factory=DataConfig)
    screw: ScrewConfig = field(default_factory=ScrewConfig)
    dh: DhConfig = field(default_factory=DhConfig)
    ik: IkParams = field(default_factory=IkParams)
    retarget: RetargetConfig = field(default_factory=RetargetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    voo: VooConfig = field(default_factory=VooConfig)
    latent: LatentConfig = field(default_factory=LatentConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def flat(self) -> Dict[str, str]:
        """Flatten back into KEY=value strings (used for config echoes)"""
        out = {}
        for prefix, (attr, _) in SECTIONS.items():
            for name, value in asdict(getattr(self, attr)).items():
                if isinstance(value, (tuple, list)):
                    value = ",".join(str(v) for v in value)
                out[f"{prefix}_{name.upper()}"] = str(value)
        return out


def _parse_value(key: str, raw: str, kind):
    try:
        if kind is bool:
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw.strip()
        # Tuple[...] fields are comma separated
        items = [item.strip() for item in raw.split(",") if item.strip()]
        inner = getattr(kind, "__args__", (str,))[0]
        return tuple(inner(item) for item in items)
    except (TypeError, ValueError):
        raise ConfigError(f"Cannot parse {key}={raw!r}")


def _split_key(key: str) -> Optional[Tuple[str, str]]:
    for prefix in SECTIONS:
        if key.startswith(prefix + "_"):
            return prefix, key[len(prefix) + 1:].lower()
    return None


def apply_overrides(cfg: PipelineConfig, values: Dict[str, str], strict: bool = True) -> PipelineConfig:
    """Apply KEY=value overrides; keys outside the known sections are ignored"""
    grouped: Dict[str, Dict[str, object]] = {}
    for key, raw in values.items():
        if raw is None:
            continue
        split = _split_key(key.upper())
        if split is None:
            continue
        prefix, name = split
        attr, section_cls = SECTIONS[prefix]
        hints = get_type_hints(section_cls)
        if name not in {f.name for f in fields(section_cls)}:
            if not strict:
                continue
            raise ConfigError(f"Unknown key {key} in section {prefix}")
        grouped.setdefault(attr, {})[name] = _parse_value(key, str(raw), hints[name])

    updates = {attr: replace(getattr(cfg, attr), **changes) for attr, changes in grouped.items()}
    return replace(cfg, **updates)


def load_config(path: Optional[str] = None, use_environment: bool = True) -> PipelineConfig:
    """Load the pipeline config from a dotenv file, then environment overrides"""
    cfg = PipelineConfig()
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"Config file not found: {path}")
        cfg = apply_overrides(cfg, dict(dotenv_values(path)))
    if use_environment:
        env = {k: v for k, v in os.environ.items() if _split_key(k) is not None}
        cfg = apply_overrides(cfg, env, strict=False)
    return cfg
