# src/headmask/core/config.py

"""
Pipeline Configuration

One YAML file drives every stage. Precedence, lowest first: dataclass
defaults, the config file, CLI flags. The top-level seed seeds both trainers;
the data section keeps its own generator seed.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from .errors import ConfigError
from .schema import (
    ANALYSIS_DECODE,
    DecodeParams,
    GeneratorSpec,
    ModelConfig,
    TrainConfig,
    from_mapping,
)

logger = logging.getLogger(__name__)

STAGES = (
    "gen-data",
    "train",
    "train-tagger",
    "tune-boundary",
    "analyze-effect",
    "analyze-synergy",
    "analyze-focus",
    "select-heads",
    "summarize",
    "evaluate",
)

TAGGER_DEFAULTS = TrainConfig(learning_rate=5e-4)


@dataclass(frozen=True)
class AnalysisConfig:
    """Analysis-set size and the (greedy) decoding used by every analysis."""

    size: int = 200
    decode: DecodeParams = ANALYSIS_DECODE

    def to_dict(self) -> dict[str, Any]:
        return {"size": self.size, **self.decode.to_dict()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AnalysisConfig":
        data = dict(data)
        size = data.pop("size", cls.size)
        if not isinstance(size, int) or size < 1:
            raise ConfigError("analysis.size must be a positive integer")
        decode = DecodeParams.from_dict({**ANALYSIS_DECODE.to_dict(), **data}, "analysis")
        return cls(size=size, decode=decode)


@dataclass(frozen=True)
class SelectionConfig:
    block: int = 4

    def to_dict(self) -> dict[str, Any]:
        return {"block": self.block}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SelectionConfig":
        sc: SelectionConfig = from_mapping(cls, data, "selection")
        if sc.block < 1:
            raise ConfigError("selection.block must be >= 1")
        return sc


@dataclass(frozen=True)
class SweepConfig:
    """Training-set fractions for the limited-data sweep."""

    fractions: tuple[float, ...] = (0.1, 0.25, 0.5, 1.0)

    def to_dict(self) -> dict[str, Any]:
        return {"fractions": list(self.fractions)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SweepConfig":
        data = dict(data)
        if "fractions" in data:
            data["fractions"] = tuple(float(f) for f in data["fractions"])
        sc: SweepConfig = from_mapping(cls, data, "sweep")
        if not sc.fractions or any(not 0.0 < f <= 1.0 for f in sc.fractions):
            raise ConfigError("sweep.fractions must be a nonempty list of values in (0, 1]")
        return sc


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    threads: int = 1
    out_dir: str = "runs/demo"
    stages: tuple[str, ...] = STAGES
    data: GeneratorSpec = field(default_factory=GeneratorSpec)
    corpus: Optional[str] = None
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    tagger: TrainConfig = TAGGER_DEFAULTS
    decode: DecodeParams = field(default_factory=DecodeParams)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def validate(self) -> None:
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        unknown = [s for s in self.stages if s not in STAGES]
        if unknown:
            raise ConfigError(f"unknown stage(s): {', '.join(unknown)}")
        self.model.validate()
        self.train.validate()
        self.tagger.validate()
        self.decode.validate(self.model.max_positions)
        self.analysis.decode.validate(self.model.max_positions)

    @property
    def summarizer_train(self) -> TrainConfig:
        return replace(self.train, seed=self.seed, workers=self.threads)

    @property
    def tagger_train(self) -> TrainConfig:
        return replace(self.tagger, seed=self.seed, workers=self.threads)

    def to_dict(self) -> dict[str, Any]:
        data = self.data.to_dict()
        if self.corpus is not None:
            data["corpus"] = self.corpus
        return {
            "seed": self.seed,
            "threads": self.threads,
            "out_dir": self.out_dir,
            "stages": list(self.stages),
            "data": data,
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "tagger": self.tagger.to_dict(),
            "decode": self.decode.to_dict(),
            "analysis": self.analysis.to_dict(),
            "selection": self.selection.to_dict(),
            "sweep": self.sweep.to_dict(),
        }

    def hash(self) -> str:
        """Hash of the settings that affect results (threads and out_dir excluded)."""
        payload = self.to_dict()
        del payload["threads"], payload["out_dir"]
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _section(raw: dict[str, Any], name: str) -> dict[str, Any]:
    value = raw.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"config section '{name}' must be a mapping")
    return dict(value)


def config_from_dict(raw: dict[str, Any]) -> PipelineConfig:
    unknown = sorted(set(raw) - set(PipelineConfig().to_dict()))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")

    data = _section(raw, "data")
    corpus = data.pop("corpus", None)
    stages = raw.get("stages", STAGES)
    if isinstance(stages, str) or not isinstance(stages, (list, tuple)):
        raise ConfigError("stages must be a list of stage names")

    try:
        cfg = PipelineConfig(
            seed=int(raw.get("seed", 0)),
            threads=int(raw.get("threads", 1)),
            out_dir=str(raw.get("out_dir", PipelineConfig.out_dir)),
            stages=tuple(str(s) for s in stages),
            data=GeneratorSpec.from_dict(data),
            corpus=str(corpus) if corpus is not None else None,
            model=ModelConfig.from_dict(_section(raw, "model")),
            train=TrainConfig.from_dict(_section(raw, "train")),
            tagger=TrainConfig.from_dict(
                {**TAGGER_DEFAULTS.to_dict(), **_section(raw, "tagger")}, "tagger"
            ),
            decode=DecodeParams.from_dict(_section(raw, "decode")),
            analysis=AnalysisConfig.from_dict(_section(raw, "analysis")),
            selection=SelectionConfig.from_dict(_section(raw, "selection")),
            sweep=SweepConfig.from_dict(_section(raw, "sweep")),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid config value: {e}") from e
    cfg.validate()
    return cfg


def load_config(path: Optional[Union[str, Path]] = None) -> PipelineConfig:
    """Load a YAML config file; no path gives the built-in defaults."""
    if path is None:
        return config_from_dict({})
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse config {path}: {e}") from e
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping at the top level")
    logger.debug("Loaded config from %s", path)
    return config_from_dict(raw)


def apply_overrides(
    cfg: PipelineConfig,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    out_dir: Optional[str] = None,
) -> PipelineConfig:
    """CLI flags win over the config file."""
    changes: dict[str, Any] = {}
    if seed is not None:
        changes["seed"] = seed
    if threads is not None:
        changes["threads"] = threads
    if out_dir is not None:
        changes["out_dir"] = out_dir
    updated = replace(cfg, **changes)
    updated.validate()
    return updated
