"""Run configuration: every knob of a pipeline run in one strict structure.

Configs load from JSON with explicit keys only; an unknown key anywhere is
an error rather than a silently ignored typo. Two digests derive from the
canonicalized config: the feature digest (fusion mode + both feature
geometries) ties extracted feature files to the runs that may consume
them, and the full config digest identifies a trained checkpoint.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .blocks import BackboneConfig
from .dsp import ConfigError, LfccConfig, MfccConfig


@dataclass
class MaskingConfig:
    enabled: bool = False
    fraction: float = 0.07
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.fraction < 1.0:
            raise ConfigError(f"masking fraction must be in [0, 1), got {self.fraction}")


@dataclass
class BackboneSettings:
    variant: str = "resnet34_se"
    stage_blocks: tuple = (3, 4, 6, 3)
    base_width: int = 64
    se_reduction: int = 16
    mscam_reduction: int = 4


@dataclass
class OptimizerConfig:
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 8
    epochs: int = 30

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be positive")


def _load_section(cls, mapping: dict, section: str):
    if not isinstance(mapping, dict):
        raise ConfigError(f"config section {section!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in config section {section!r}")
    try:
        return cls(**mapping)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config section {section!r}: {exc}") from exc


@dataclass
class RunConfig:
    seed: int = 0
    fusion: str = "aff"
    mfcc: MfccConfig = field(default_factory=MfccConfig)
    lfcc: LfccConfig = field(default_factory=LfccConfig)
    masking: MaskingConfig = field(default_factory=MaskingConfig)
    backbone: BackboneSettings = field(default_factory=BackboneSettings)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    _SECTIONS = {"seed", "fusion", "mfcc", "lfcc", "masking", "backbone", "optimizer"}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("run config must be a JSON object")
        unknown = sorted(set(data) - cls._SECTIONS)
        if unknown:
            raise ConfigError(f"unknown top-level config key(s) {unknown}")
        backbone = dict(data.get("backbone", {}))
        if "stage_blocks" in backbone:
            backbone["stage_blocks"] = tuple(backbone["stage_blocks"])
        cfg = cls(
            seed=int(data.get("seed", 0)),
            fusion=str(data.get("fusion", "aff")),
            mfcc=_load_section(MfccConfig, data.get("mfcc", {}), "mfcc"),
            lfcc=_load_section(LfccConfig, data.get("lfcc", {}), "lfcc"),
            masking=_load_section(MaskingConfig, data.get("masking", {}), "masking"),
            backbone=_load_section(BackboneSettings, backbone, "backbone"),
            optimizer=_load_section(OptimizerConfig, data.get("optimizer", {}), "optimizer"),
        )
        cfg.backbone_config()  # validates variant/fusion/stage_blocks eagerly
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        data = {
            "seed": self.seed,
            "fusion": self.fusion,
            "mfcc": dataclasses.asdict(self.mfcc),
            "lfcc": dataclasses.asdict(self.lfcc),
            "masking": dataclasses.asdict(self.masking),
            "backbone": dataclasses.asdict(self.backbone),
            "optimizer": dataclasses.asdict(self.optimizer),
        }
        data["backbone"]["stage_blocks"] = list(self.backbone.stage_blocks)
        return data

    def to_json(self) -> str:
        return _canonical_json(self.to_dict())

    def backbone_config(self) -> BackboneConfig:
        b = self.backbone
        return BackboneConfig(
            variant=b.variant,
            stage_blocks=b.stage_blocks,
            base_width=b.base_width,
            fusion=self.fusion,
            masking=self.masking.enabled,
            se_reduction=b.se_reduction,
            mscam_reduction=b.mscam_reduction,
        )

    def feature_digest(self) -> str:
        """Digest of the parts that must agree between extract and eval."""
        part = {
            "fusion": self.fusion,
            "mfcc": dataclasses.asdict(self.mfcc),
            "lfcc": dataclasses.asdict(self.lfcc),
        }
        return _sha256(part)

    def config_digest(self) -> str:
        return _sha256(self.to_dict())


def _canonical_json(data: dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def _sha256(data: dict) -> str:
    return hashlib.sha256(_canonical_json(data).encode("utf-8")).hexdigest()
