"""
Headmask Schema Definitions

Data structures shared across the model, the analyses and the CLI.
"""

import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Any, Optional

import numpy as np
import numpy.typing as npt

from .errors import AllMaskedError, AnalysisError, ConfigError, InputError, ShapeError

# Reserved vocabulary entries, always ids 0..3
PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
RESERVED_TOKENS = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3

TokenSequence = tuple[int, ...]
SaliencyLabels = npt.NDArray[np.bool_]


class Split(Enum):
    """Corpus split an example belongs to."""

    TRAIN = "train"
    VALIDATION = "validation"
    ANALYSIS = "analysis"
    TEST = "test"


class SummarizeMode(Enum):
    """Decoding modes compared by the evaluation report."""

    UNMASKED = "unmasked"
    ORACLE = "oracle"
    TAGGER = "tagger"


class FocusCategory(Enum):
    """Attendee categories tallied by attention focus analysis."""

    COPY_SALIENT = "copy_salient"
    NONCOPY_SALIENT = "noncopy_salient"
    COPY_CONTENT = "copy_content"
    NONCOPY_CONTENT = "noncopy_content"
    FIRST = "first"
    LAST = "last"


def from_mapping(cls: Any, data: dict[str, Any], section: str) -> Any:
    """Build a config dataclass from a mapping, rejecting unknown keys."""
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(unknown)}")
    return cls(**data)


@dataclass(frozen=True)
class ModelConfig:
    """Shape of the encoder-decoder transformer."""

    vocab_size: int = 200
    d_model: int = 64
    n_heads: int = 4
    n_enc_layers: int = 4
    n_dec_layers: int = 4
    d_ff: int = 128
    max_positions: int = 256

    @property
    def d_k(self) -> int:
        return self.d_model // self.n_heads

    def validate(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise ConfigError(f"model.{f.name} must be >= 1")
        if self.vocab_size < len(RESERVED_TOKENS):
            raise ConfigError("model.vocab_size must be >= 4 (pad, bos, eos, unk)")
        if self.d_model % self.n_heads != 0:
            raise ConfigError("model.d_model must be divisible by model.n_heads")

    def to_dict(self) -> dict[str, int]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelConfig":
        cfg: ModelConfig = from_mapping(cls, data, "model")
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class DecodeParams:
    """Beam search settings. Lengths count generated tokens, eos excluded."""

    beam_size: int = 5
    min_len: int = 8
    max_len: int = 64
    length_penalty: float = 2.0

    def validate(self, max_positions: Optional[int] = None) -> None:
        if self.beam_size < 1:
            raise ConfigError("decode.beam_size must be >= 1")
        if self.min_len < 0 or self.min_len > self.max_len:
            raise ConfigError("decode.min_len must be in [0, max_len]")
        if self.length_penalty < 0:
            raise ConfigError("decode.length_penalty must be nonnegative")
        # the longest decoder input is bos plus max_len tokens; eos is never fed back
        if max_positions is not None and self.max_len + 1 > max_positions:
            raise ConfigError("decode.max_len must leave room for bos (max_len < max_positions)")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any], section: str = "decode") -> "DecodeParams":
        dp: DecodeParams = from_mapping(cls, data, section)
        dp.validate()
        return dp


ANALYSIS_DECODE = DecodeParams(beam_size=1, min_len=1, max_len=32, length_penalty=1.0)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and early-stopping settings."""

    learning_rate: float = 3e-4
    batch_size: int = 16
    max_epochs: int = 20
    patience: int = 2
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    freeze_encoder: bool = True
    hidden_size: int = 64
    workers: int = 1

    def validate(self) -> None:
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("adam betas must be in [0, 1)")
        if self.eps <= 0:
            raise ConfigError("adam eps must be > 0")
        if self.hidden_size < 1 or self.workers < 1:
            raise ConfigError("hidden_size and workers must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any], section: str = "train") -> "TrainConfig":
        tc: TrainConfig = from_mapping(cls, data, section)
        tc.validate()
        return tc


@dataclass(frozen=True)
class GeneratorSpec:
    """Synthetic corpus recipe: salient spans embedded in distractor filler."""

    seed: int = 13
    n_train: int = 2000
    n_validation: int = 200
    n_analysis: int = 200
    n_test: int = 200
    source_len: tuple[int, int] = (30, 60)
    n_salient_spans: tuple[int, int] = (1, 3)
    span_len: tuple[int, int] = (3, 6)
    distractor_rate: float = 0.7
    vocab_size: int = 200
    key_bias: float = 0.8

    @property
    def n_examples(self) -> int:
        return self.n_train + self.n_validation + self.n_analysis + self.n_test

    def validate(self) -> None:
        for name in ("source_len", "n_salient_spans", "span_len"):
            lo, hi = getattr(self, name)
            if lo < 1 or lo > hi:
                raise ConfigError(f"data.{name} must be a nonempty range of counts")
        if not 0.0 <= self.distractor_rate < 1.0:
            raise ConfigError("data.distractor_rate must be in [0, 1)")
        if not 0.5 <= self.key_bias <= 1.0:
            raise ConfigError("data.key_bias must be in [0.5, 1]")
        if min(self.n_train, self.n_validation, self.n_analysis, self.n_test) < 0:
            raise ConfigError("split sizes must be >= 0")
        if self.n_examples < 1:
            raise ConfigError("the generated corpus must hold at least one example")
        max_spans = self.n_salient_spans[1] * self.span_len[1]
        if max_spans > self.source_len[1]:
            raise ConfigError(
                f"infeasible data spec: up to {max_spans} salient tokens do not fit "
                f"a source of at most {self.source_len[1]} tokens"
            )

    def to_dict(self) -> dict[str, Any]:
        result = asdict(self)
        for name in ("source_len", "n_salient_spans", "span_len"):
            result[name] = list(result[name])
        return result

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "GeneratorSpec":
        data = dict(data)
        for name in ("source_len", "n_salient_spans", "span_len"):
            if name in data:
                value = data[name]
                if not isinstance(value, (list, tuple)) or len(value) != 2:
                    raise ConfigError(f"data.{name} must be a [min, max] pair")
                data[name] = (int(value[0]), int(value[1]))
        spec: GeneratorSpec = from_mapping(cls, data, "data")
        spec.validate()
        return spec


@dataclass(frozen=True)
class RougeScore:
    """Precision/recall/F1 for one ROUGE variant."""

    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


ROUGE_METRICS = ("rouge1", "rouge2", "rougeL")
ROUGE_STATS = ("precision", "recall", "f1")


@dataclass(frozen=True)
class RougeScores:
    """ROUGE-1, ROUGE-2 and ROUGE-L bundle."""

    rouge1: RougeScore = field(default_factory=RougeScore)
    rouge2: RougeScore = field(default_factory=RougeScore)
    rougeL: RougeScore = field(default_factory=RougeScore)

    def get(self, metric: str, stat: str = "f1") -> float:
        value: float = getattr(getattr(self, metric), stat)
        return value

    @property
    def r1_plus_r2(self) -> float:
        return self.rouge1.f1 + self.rouge2.f1

    def minus(self, other: "RougeScores") -> dict[str, dict[str, float]]:
        """Per-metric, per-stat difference self - other."""
        return {
            m: {s: self.get(m, s) - other.get(m, s) for s in ROUGE_STATS}
            for m in ROUGE_METRICS
        }

    def to_dict(self) -> dict[str, dict[str, float]]:
        return {m: getattr(self, m).to_dict() for m in ROUGE_METRICS}


@dataclass(frozen=True, eq=False)
class HeadMaskVector:
    """Additive per-source-position mask: 0 for salient, -inf otherwise."""

    values: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        values = self.values
        if values.ndim != 1:
            raise ShapeError("head mask vector must be 1-d")
        if not np.all((values == 0.0) | np.isneginf(values)):
            raise ShapeError("head mask entries must be 0 or -inf")
        if not np.any(values == 0.0):
            raise AllMaskedError("head mask hides every source token")

    @classmethod
    def from_labels(cls, labels: Any) -> "HeadMaskVector":
        flags = np.asarray(labels, dtype=bool)
        return cls(np.where(flags, 0.0, -math.inf).astype(np.float64))

    def __len__(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class HeadMaskConfig:
    """Which encoder-decoder attention heads receive the head mask."""

    active: tuple[tuple[bool, ...], ...]

    @classmethod
    def none(cls, cfg: ModelConfig) -> "HeadMaskConfig":
        return cls(tuple((False,) * cfg.n_heads for _ in range(cfg.n_dec_layers)))

    @classmethod
    def all(cls, cfg: ModelConfig) -> "HeadMaskConfig":
        return cls(tuple((True,) * cfg.n_heads for _ in range(cfg.n_dec_layers)))

    @classmethod
    def for_heads(
        cls, cfg: ModelConfig, layer: int, heads: Sequence[int]
    ) -> "HeadMaskConfig":
        if not 0 <= layer < cfg.n_dec_layers:
            raise ConfigError(f"layer {layer} out of range [0, {cfg.n_dec_layers})")
        bad = [h for h in heads if not 0 <= h < cfg.n_heads]
        if bad:
            raise ConfigError(f"head indices out of range: {bad}")
        chosen = set(heads)
        return cls(
            tuple(
                tuple(i == layer and h in chosen for h in range(cfg.n_heads))
                for i in range(cfg.n_dec_layers)
            )
        )

    @property
    def any_active(self) -> bool:
        return any(any(row) for row in self.active)

    def check_shape(self, cfg: ModelConfig) -> None:
        if len(self.active) != cfg.n_dec_layers or any(
            len(row) != cfg.n_heads for row in self.active
        ):
            raise ShapeError("head mask config shape does not match the model")

    def active_heads(self) -> list[tuple[int, int]]:
        return [
            (i, h) for i, row in enumerate(self.active) for h, on in enumerate(row) if on
        ]


@dataclass
class AttentionTrace:
    """Encoder-decoder attention rows per decode step, [step][layer][head]."""

    steps: list[list[list[npt.NDArray[np.float64]]]] = field(default_factory=list)

    def append_step(self, rows: list[list[npt.NDArray[np.float64]]]) -> None:
        self.steps.append(rows)

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class Hypothesis:
    """A decoded sequence (bos excluded) with its total log-probability."""

    tokens: TokenSequence
    log_prob: float
    finished: bool

    @property
    def length(self) -> int:
        """Generated tokens, eos excluded."""
        if self.tokens and self.tokens[-1] == EOS_ID:
            return len(self.tokens) - 1
        return len(self.tokens)

    @property
    def content(self) -> TokenSequence:
        return self.tokens[: self.length]


@dataclass(frozen=True)
class DecisionBoundary:
    """Tagger probability threshold, searched over [0.10, 0.40]."""

    value: float
    f1: Optional[float] = None

    MIN = 0.10
    MAX = 0.40

    def __post_init__(self) -> None:
        if not self.MIN - 1e-12 <= self.value <= self.MAX + 1e-12:
            raise ConfigError(
                f"decision boundary {self.value} outside [{self.MIN}, {self.MAX}]"
            )

    def to_dict(self) -> dict[str, Any]:
        return {"boundary": self.value, "f1": self.f1}


class Vocab:
    """Reversible token <-> id mapping with reserved ids 0..3."""

    def __init__(self, tokens: Optional[list[str]] = None) -> None:
        self.itos: list[str] = list(RESERVED_TOKENS)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for token in tokens or []:
            self.add(token)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def encode(self, tokens: Sequence[str]) -> TokenSequence:
        return tuple(self.stoi.get(t, UNK_ID) for t in tokens)

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.itos[i] if 0 <= i < len(self.itos) else UNK for i in ids]

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def to_list(self) -> list[str]:
        return list(self.itos[len(RESERVED_TOKENS) :])


@dataclass
class Example:
    """One source/reference pair with optional salience labels."""

    id: str
    source: tuple[str, ...]
    reference: tuple[str, ...]
    labels: Optional[tuple[int, ...]] = None
    split: Split = Split.TRAIN

    def to_dict(self) -> dict[str, Any]:
        result: dict[str, Any] = {
            "id": self.id,
            "source": list(self.source),
            "reference": list(self.reference),
        }
        if self.labels is not None:
            result["labels"] = list(self.labels)
        result["split"] = self.split.value
        return result

    @property
    def label_array(self) -> SaliencyLabels:
        if self.labels is None:
            raise InputError(f"example {self.id} carries no salience labels")
        return np.asarray(self.labels, dtype=bool)


@dataclass
class Corpus:
    """Examples plus their shared vocabulary."""

    examples: list[Example] = field(default_factory=list)
    vocab: Vocab = field(default_factory=Vocab)

    def split(self, split: Split) -> list[Example]:
        return [ex for ex in self.examples if ex.split == split]

    def counts(self) -> dict[str, int]:
        return {s.value: len(self.split(s)) for s in Split}

    def __len__(self) -> int:
        return len(self.examples)


@dataclass(frozen=True)
class EncodedExample:
    """Model-ready view of an Example."""

    id: str
    source: TokenSequence
    reference: TokenSequence
    labels: Optional[SaliencyLabels] = None

    @classmethod
    def from_example(cls, example: Example, vocab: Vocab) -> "EncodedExample":
        labels = example.label_array if example.labels is not None else None
        return cls(
            id=example.id,
            source=vocab.encode(example.source),
            reference=vocab.encode(example.reference),
            labels=labels,
        )


# Analysis results


@dataclass
class ContentSelectionEffect:
    """Per-head oracle-mask ROUGE against the uniform-attention baseline."""

    r_uni: RougeScores
    per_head: list[list[RougeScores]]
    r_base: Optional[RougeScores] = None
    fallbacks: int = 0

    def effect(self, layer: int, head: int, metric: str = "rouge1", stat: str = "f1") -> float:
        return self.per_head[layer][head].get(metric, stat) - self.r_uni.get(metric, stat)

    @property
    def effect_grid(self) -> list[list[dict[str, dict[str, float]]]]:
        return [[cell.minus(self.r_uni) for cell in row] for row in self.per_head]

    def to_dict(self) -> dict[str, Any]:
        result: dict[str, Any] = {
            "r_uni": self.r_uni.to_dict(),
            "per_head": [[cell.to_dict() for cell in row] for row in self.per_head],
            "effect": self.effect_grid,
            "fallbacks": self.fallbacks,
        }
        if self.r_base is not None:
            result["r_base"] = self.r_base.to_dict()
        return result

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ContentSelectionEffect":
        return cls(
            r_uni=rouge_scores_from_dict(data["r_uni"]),
            per_head=[
                [rouge_scores_from_dict(cell) for cell in row] for row in data["per_head"]
            ],
            r_base=rouge_scores_from_dict(data["r_base"]) if "r_base" in data else None,
            fallbacks=int(data.get("fallbacks", 0)),
        )


def rouge_scores_from_dict(data: dict[str, dict[str, float]]) -> RougeScores:
    return RougeScores(**{m: RougeScore(**data[m]) for m in ROUGE_METRICS})


@dataclass
class CurvePoint:
    """One point of an incremental masking curve."""

    k: int
    heads: list[int]
    scores: RougeScores
    improvement_f1: float
    improvement_recall: float
    non_positive_head: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "heads": self.heads,
            "scores": self.scores.to_dict(),
            "improvement_f1": self.improvement_f1,
            "improvement_recall": self.improvement_recall,
            "non_positive_head": self.non_positive_head,
        }


@dataclass
class LayerSynergy:
    """Synergy results for one decoder layer."""

    layer: int
    order: list[int]
    curve: list[CurvePoint]
    joint_all: RougeScores
    joint_improvement: dict[str, dict[str, float]]
    sum_of_individuals: dict[str, dict[str, float]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "layer": self.layer,
            "order": self.order,
            "curve": [p.to_dict() for p in self.curve],
            "joint_all": self.joint_all.to_dict(),
            "joint_improvement": self.joint_improvement,
            "sum_of_individuals": self.sum_of_individuals,
        }


@dataclass
class SynergyReport:
    layers: list[LayerSynergy]

    def to_dict(self) -> dict[str, Any]:
        return {"layers": [layer.to_dict() for layer in self.layers]}


@dataclass
class FocusTally:
    """Attendee category counts per (layer, head).

    Categories overlap: a FIRST attendee may also be SALIENT or CONTENT.
    """

    counts: npt.NDArray[np.int64]  # [layer][head][category]
    totals: npt.NDArray[np.int64]  # [layer][head]

    def count(self, layer: int, head: int, category: FocusCategory) -> int:
        return int(self.counts[layer, head, list(FocusCategory).index(category)])

    def percentages(self) -> list[list[dict[str, float]]]:
        result = []
        for layer in range(self.counts.shape[0]):
            row = []
            for h in range(self.counts.shape[1]):
                total = int(self.totals[layer, h])
                row.append(
                    {
                        c.value: (100.0 * self.count(layer, h, c) / total) if total else 0.0
                        for c in FocusCategory
                    }
                )
            result.append(row)
        return result

    def to_dict(self) -> dict[str, Any]:
        return {
            "categories": [c.value for c in FocusCategory],
            "counts": [
                [
                    {c.value: self.count(layer, h, c) for c in FocusCategory}
                    for h in range(self.counts.shape[1])
                ]
                for layer in range(self.counts.shape[0])
            ],
            "totals": self.totals.tolist(),
            "percentages": self.percentages(),
        }


@dataclass
class HeadSelectionResult:
    """Best single-layer head subset under system masks."""

    layer: int
    heads: list[int]
    score: float
    trajectory: list[dict[str, Any]]
    baseline_score: Optional[float] = None
    fallbacks: int = 0

    def __post_init__(self) -> None:
        if not self.heads:
            raise AnalysisError("head selection produced an empty subset")

    def to_dict(self) -> dict[str, Any]:
        return {
            "layer": self.layer,
            "heads": sorted(self.heads),
            "score": self.score,
            "trajectory": self.trajectory,
            "baseline_score": self.baseline_score,
            "fallbacks": self.fallbacks,
        }

    def mask_config(self, cfg: ModelConfig) -> HeadMaskConfig:
        return HeadMaskConfig.for_heads(cfg, self.layer, self.heads)
