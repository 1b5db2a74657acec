# src/headmask/core/pipeline.py

"""
Pipeline Runner

Sequences the stages (generate, train, tag, tune, analyze, select, summarize,
evaluate) over artifacts in one output directory. Every stage reads what it
needs from disk, so each can also be run on its own from the CLI.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Callable, Optional, Union

from ..corpus import generate_corpus, ingest, write_jsonl
from .analysis import (
    attention_focus,
    content_selection_effect,
    oracle_masks,
    score_hypotheses,
    synergy_analysis,
)
from .checkpoint import (
    KIND_TAGGER,
    load_checkpoint,
    load_model,
    params_hash,
    save_checkpoint,
    save_model,
)
from .config import PipelineConfig
from .decoding import decode_examples
from .errors import ConfigError, HeadmaskError, InputError
from .model import Seq2SeqModel
from .report import (
    examples_hash,
    file_hash,
    provenance,
    read_report,
    write_effect_csv,
    write_report,
)
from .saliency import SaliencyTagger, tune_boundary
from .schema import (
    ContentSelectionEffect,
    Corpus,
    DecisionBoundary,
    EncodedExample,
    HeadMaskConfig,
    Hypothesis,
    ModelConfig,
    RougeScores,
    Split,
    SummarizeMode,
)
from .selection import greedy_select_heads, system_masks
from .training import TrainingLog, train_summarizer, train_tagger

logger = logging.getLogger(__name__)

ARTIFACTS = {
    "corpus": "corpus.jsonl",
    "summarizer": "summarizer.json",
    "tagger": "tagger.json",
    "boundary": "boundary.json",
    "effect": "effect.json",
    "effect_csv": "effect.csv",
    "synergy": "synergy.json",
    "focus": "focus.json",
    "selection": "selection.json",
    "evaluation": "evaluation.json",
    "sweep": "sweep.json",
    "train_log": "train_log.jsonl",
    "tagger_log": "tagger_log.jsonl",
}


def read_mask_config(path: Union[str, Path], cfg: ModelConfig) -> HeadMaskConfig:
    """Parse {"layer": int, "heads": [int]} (a selection report also qualifies)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"mask config not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        layer, heads = data["layer"], data["heads"]
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise ConfigError(f"{path} is not a mask config ({e})") from e
    if not isinstance(layer, int) or not isinstance(heads, list) or not heads:
        raise ConfigError(f"{path}: 'layer' must be an int and 'heads' a nonempty list")
    return HeadMaskConfig.for_heads(cfg, layer, [int(h) for h in heads])


class Pipeline:
    """Stage runner bound to one configuration and output directory."""

    def __init__(self, config: PipelineConfig) -> None:
        self.config = config
        self.out_dir = Path(config.out_dir)
        self._corpus: Optional[Corpus] = None
        self._model: Optional[Seq2SeqModel] = None
        self._tagger: Optional[SaliencyTagger] = None

    def path(self, artifact: str) -> Path:
        return self.out_dir / ARTIFACTS[artifact]

    def _require(self, artifact: str, stage: str) -> Path:
        path = self.path(artifact)
        if not path.exists():
            raise ConfigError(f"{path} is missing; run '{stage}' first")
        return path

    # Artifact loading

    def corpus(self) -> Corpus:
        if self._corpus is None:
            self._corpus = ingest(self._require("corpus", "gen-data"))
        return self._corpus

    def encoded(self, split: Split, corpus: Optional[Corpus] = None) -> list[EncodedExample]:
        corpus = corpus if corpus is not None else self.corpus()
        return [EncodedExample.from_example(ex, corpus.vocab) for ex in corpus.split(split)]

    def target_corpus(self, corpus_path: Union[str, Path]) -> Corpus:
        """Another corpus read through the summarizer's vocabulary.

        Words the summarizer never saw read as <unk>; labels come from the
        file or from oracle alignment.
        """
        other = ingest(corpus_path)
        vocab = self.corpus().vocab
        unseen = {t for ex in other.examples for t in (*ex.source, *ex.reference)} - set(vocab.stoi)
        if unseen:
            logger.warning(
                "%d word types of %s are outside the summarizer vocabulary and read as <unk>",
                len(unseen),
                corpus_path,
            )
        return Corpus(examples=other.examples, vocab=vocab)

    def analysis_set(self) -> list[EncodedExample]:
        examples = self.encoded(Split.ANALYSIS)[: self.config.analysis.size]
        if not examples:
            raise InputError("the corpus has no analysis examples")
        return examples

    def model(self) -> Seq2SeqModel:
        if self._model is None:
            self._model = load_model(self._require("summarizer", "train"))
        return self._model

    def tagger(self) -> SaliencyTagger:
        if self._tagger is None:
            config, params = load_checkpoint(self._require("tagger", "train-tagger"), KIND_TAGGER)
            cfg = ModelConfig.from_dict(config.get("model", {}))
            self._tagger = SaliencyTagger(cfg, params, bool(config.get("freeze_encoder", True)))
        return self._tagger

    def boundary(self) -> DecisionBoundary:
        data = read_report(self._require("boundary", "tune-boundary"))
        return DecisionBoundary(float(data["boundary"]), data.get("f1"))

    def effect(self) -> ContentSelectionEffect:
        return ContentSelectionEffect.from_dict(
            read_report(self._require("effect", "analyze-effect"))
        )

    def head_mask(self, mask_from: Optional[Union[str, Path]] = None) -> HeadMaskConfig:
        if mask_from is None:
            mask_from = self._require("selection", "select-heads")
        return read_mask_config(mask_from, self.model().cfg)

    def _provenance(self, inputs: Optional[dict[str, str]] = None, with_model: bool = True) -> dict[str, Any]:
        all_inputs = {"corpus": file_hash(self.path("corpus"))} if self.path("corpus").exists() else {}
        all_inputs.update(inputs or {})
        model_hash = params_hash(self.model().params) if with_model else None
        return provenance(self.config.hash(), self.config.seed, model_hash, all_inputs)

    # Stages

    def gen_data(self) -> dict[str, Any]:
        if self.config.corpus is not None:
            corpus = ingest(self.config.corpus)
        else:
            corpus = generate_corpus(self.config.data)
        write_jsonl(corpus, self.path("corpus"))
        self._corpus = corpus
        return {"examples": len(corpus), "vocab": len(corpus.vocab), "splits": corpus.counts()}

    def _check_vocab(self, corpus: Corpus) -> None:
        if len(corpus.vocab) > self.config.model.vocab_size:
            raise ConfigError(
                f"corpus vocabulary has {len(corpus.vocab)} types but "
                f"model.vocab_size is {self.config.model.vocab_size}"
            )

    def train(self) -> dict[str, Any]:
        corpus = self.corpus()
        self._check_vocab(corpus)
        with TrainingLog(self.path("train_log")) as log:
            params = train_summarizer(corpus, self.config.model, self.config.summarizer_train, log)
        self._model = Seq2SeqModel(self.config.model, params)
        digest = save_model(self.path("summarizer"), self._model)
        return {"checkpoint": str(self.path("summarizer")), "model_hash": digest}

    def train_tagger(self, corpus_path: Optional[Union[str, Path]] = None) -> dict[str, Any]:
        corpus = self.target_corpus(corpus_path) if corpus_path is not None else self.corpus()
        tc = self.config.tagger_train
        with TrainingLog(self.path("tagger_log")) as log:
            tagger = train_tagger(corpus, self.config.model, tc, self.model().params, log)
        self._tagger = tagger
        config = {
            "model": self.config.model.to_dict(),
            "freeze_encoder": tc.freeze_encoder,
            "hidden_size": tc.hidden_size,
            "corpus": str(corpus_path) if corpus_path is not None else None,
        }
        digest = save_checkpoint(self.path("tagger"), KIND_TAGGER, config, tagger.params)
        return {"checkpoint": str(self.path("tagger")), "tagger_hash": digest}

    def tune_boundary(self, corpus_path: Optional[Union[str, Path]] = None) -> dict[str, Any]:
        """Boundary on the validation split of this corpus or of corpus_path."""
        target = self.target_corpus(corpus_path) if corpus_path is not None else None
        validation = self.encoded(Split.VALIDATION, target)
        if not validation:
            raise InputError("the corpus has no validation examples")
        boundary, f1 = tune_boundary(self.tagger(), validation, self.config.threads)
        body = {
            "boundary": boundary.value,
            "f1": f1,
            "corpus": str(corpus_path) if corpus_path is not None else None,
        }
        inputs = {"split:validation": examples_hash(validation), "tagger": params_hash(self.tagger().params)}
        if corpus_path is not None:
            inputs["target_corpus"] = file_hash(corpus_path)
        prov = self._provenance(inputs, with_model=False)
        write_report(self.path("boundary"), "boundary", body, prov)
        return body

    def analyze_effect(self) -> dict[str, Any]:
        examples = self.analysis_set()
        effect = content_selection_effect(
            self.model(), examples, self.config.analysis.decode, self.config.threads
        )
        prov = self._provenance({"split:analysis": examples_hash(examples)})
        write_report(self.path("effect"), "content-selection-effect", effect.to_dict(), prov)
        write_effect_csv(self.path("effect_csv"), effect)
        best = max(
            (effect.effect(layer, h), layer, h)
            for layer in range(len(effect.per_head))
            for h in range(len(effect.per_head[layer]))
        )
        return {
            "r_uni_rouge1_f1": effect.r_uni.rouge1.f1,
            "r_base_rouge1_f1": effect.r_base.rouge1.f1 if effect.r_base else None,
            "best_head": {"layer": best[1], "head": best[2], "effect": best[0]},
            "fallbacks": effect.fallbacks,
        }

    def analyze_synergy(self) -> dict[str, Any]:
        examples = self.analysis_set()
        report = synergy_analysis(
            self.model(), examples, self.effect(), self.config.analysis.decode, self.config.threads
        )
        prov = self._provenance({"split:analysis": examples_hash(examples)})
        write_report(self.path("synergy"), "synergy", report.to_dict(), prov)
        return {
            "layers": [
                {
                    "layer": layer.layer,
                    "order": layer.order,
                    "joint_rouge1_f1_improvement": layer.joint_improvement["rouge1"]["f1"],
                    "sum_rouge1_f1_improvement": layer.sum_of_individuals["rouge1"]["f1"],
                }
                for layer in report.layers
            ]
        }

    def analyze_focus(self) -> dict[str, Any]:
        examples = self.analysis_set()
        tally = attention_focus(
            self.model(),
            examples,
            self.corpus().vocab,
            self.config.analysis.decode,
            threads=self.config.threads,
        )
        prov = self._provenance({"split:analysis": examples_hash(examples)})
        write_report(self.path("focus"), "attention-focus", tally.to_dict(), prov)
        return {"generated_tokens": int(tally.totals[0, 0]) if tally.totals.size else 0}

    def select_heads(self) -> dict[str, Any]:
        examples = self.analysis_set()
        tagger = self.tagger()
        result = greedy_select_heads(
            self.model(),
            tagger,
            self.boundary(),
            examples,
            self.effect(),
            self.config.selection.block,
            self.config.analysis.decode,
            self.config.threads,
        )
        prov = self._provenance(
            {"split:analysis": examples_hash(examples), "tagger": params_hash(tagger.params)}
        )
        write_report(self.path("selection"), "head-selection", result.to_dict(), prov)
        return {
            "layer": result.layer,
            "heads": sorted(result.heads),
            "score": result.score,
            "baseline_score": result.baseline_score,
        }

    def decode_mode(
        self,
        mode: SummarizeMode,
        examples: list[EncodedExample],
        mask_cfg: Optional[HeadMaskConfig] = None,
        model: Optional[Seq2SeqModel] = None,
        tagger: Optional[SaliencyTagger] = None,
        boundary: Optional[DecisionBoundary] = None,
    ) -> tuple[list[Hypothesis], int]:
        """Decode examples unmasked, with oracle masks or with tagger masks."""
        model = model if model is not None else self.model()
        dp = self.config.decode
        threads = self.config.threads
        if mode is SummarizeMode.UNMASKED:
            return decode_examples(model, examples, dp, threads=threads)
        if mask_cfg is None:
            raise ConfigError(f"'{mode.value}' mode needs a head mask config")
        if mode is SummarizeMode.ORACLE:
            masks = oracle_masks(examples)
        else:
            masks = system_masks(
                tagger if tagger is not None else self.tagger(),
                boundary if boundary is not None else self.boundary(),
                examples,
                threads,
            )
        hyps, fallbacks = decode_examples(model, examples, dp, mask_cfg, masks, threads=threads)
        if fallbacks:
            logger.warning(
                "%s mode: %d of %d examples had no salient token and were decoded unmasked",
                mode.value,
                fallbacks,
                len(examples),
            )
        return hyps, fallbacks

    def _test_set(self, corpus: Optional[Corpus] = None) -> list[EncodedExample]:
        examples = self.encoded(Split.TEST, corpus)
        if not examples:
            raise InputError("the corpus has no test examples")
        return examples

    def summarize(
        self,
        mode: SummarizeMode = SummarizeMode.TAGGER,
        mask_from: Optional[Union[str, Path]] = None,
        split: Split = Split.TEST,
    ) -> dict[str, Any]:
        examples = self.encoded(split)
        if not examples:
            raise InputError(f"the corpus has no {split.value} examples")
        mask_cfg = None if mode is SummarizeMode.UNMASKED else self.head_mask(mask_from)
        hyps, fallbacks = self.decode_mode(mode, examples, mask_cfg)
        vocab = self.corpus().vocab
        path = self.out_dir / f"summaries_{mode.value}.jsonl"
        with open(path, "w", encoding="utf-8") as f:
            for ex, hyp in zip(examples, hyps):
                record = {
                    "id": ex.id,
                    "mode": mode.value,
                    "summary": vocab.decode(hyp.content),
                    "log_prob": hyp.log_prob,
                }
                f.write(json.dumps(record, sort_keys=True) + "\n")
        return {"mode": mode.value, "summaries": str(path), "examples": len(hyps), "fallbacks": fallbacks}

    def _score_modes(
        self,
        examples: list[EncodedExample],
        modes: tuple[SummarizeMode, ...],
        mask_cfg: HeadMaskConfig,
        model: Optional[Seq2SeqModel] = None,
        tagger: Optional[SaliencyTagger] = None,
        boundary: Optional[DecisionBoundary] = None,
    ) -> dict[str, Any]:
        results: dict[str, Any] = {}
        for mode in modes:
            hyps, fallbacks = self.decode_mode(mode, examples, mask_cfg, model, tagger, boundary)
            scores: RougeScores = score_hypotheses(hyps, examples)
            results[mode.value] = {"scores": scores.to_dict(), "fallbacks": fallbacks}
        return results

    def evaluate(self, corpus_path: Optional[Union[str, Path]] = None) -> dict[str, Any]:
        """Score every mode on the test split of this corpus or of corpus_path."""
        target = self.target_corpus(corpus_path) if corpus_path is not None else None
        examples = self._test_set(target)
        mask_cfg = self.head_mask()
        modes = self._score_modes(examples, tuple(SummarizeMode), mask_cfg)
        layer, heads = mask_cfg.active_heads()[0][0], [h for _, h in mask_cfg.active_heads()]
        body = {
            "split": Split.TEST.value,
            "corpus": str(corpus_path) if corpus_path is not None else None,
            "n_examples": len(examples),
            "mask": {"layer": layer, "heads": heads},
            "decode": self.config.decode.to_dict(),
            "modes": modes,
        }
        inputs = {"split:test": examples_hash(examples), "tagger": params_hash(self.tagger().params)}
        if corpus_path is not None:
            inputs["target_corpus"] = file_hash(corpus_path)
        prov = self._provenance(inputs)
        write_report(self.path("evaluation"), "evaluation", body, prov)
        return {mode: data["scores"]["rouge1"]["f1"] for mode, data in modes.items()}

    def sweep_data(self, fractions: Optional[tuple[float, ...]] = None) -> dict[str, Any]:
        """Retrain on growing prefixes of the training split; compare unmasked vs tagger masks."""
        fractions = fractions or self.config.sweep.fractions
        corpus = self.corpus()
        self._check_vocab(corpus)
        mask_cfg = self.head_mask()
        train = corpus.split(Split.TRAIN)
        rest = [ex for ex in corpus.examples if ex.split is not Split.TRAIN]
        examples = self._test_set()
        validation = self.encoded(Split.VALIDATION)

        rows = []
        for fraction in fractions:
            n_train = max(1, math.ceil(fraction * len(train)))
            subset = Corpus(examples=train[:n_train] + rest, vocab=corpus.vocab)
            run_dir = self.out_dir / "sweep" / f"fraction-{fraction:g}"
            logger.info("Sweep: training on %d examples (fraction %g)", n_train, fraction)
            with TrainingLog(run_dir / ARTIFACTS["train_log"]) as log:
                params = train_summarizer(subset, self.config.model, self.config.summarizer_train, log)
            model = Seq2SeqModel(self.config.model, params)
            with TrainingLog(run_dir / ARTIFACTS["tagger_log"]) as log:
                tagger = train_tagger(subset, self.config.model, self.config.tagger_train, params, log)
            boundary, _ = tune_boundary(tagger, validation, self.config.threads)
            modes = self._score_modes(
                examples,
                (SummarizeMode.UNMASKED, SummarizeMode.TAGGER),
                mask_cfg,
                model,
                tagger,
                boundary,
            )
            rows.append(
                {
                    "fraction": fraction,
                    "n_train": n_train,
                    "boundary": boundary.value,
                    "model_hash": params_hash(params),
                    "modes": modes,
                }
            )

        prov = self._provenance({"split:test": examples_hash(examples)}, with_model=False)
        write_report(self.path("sweep"), "data-sweep", {"rows": rows}, prov)
        return {
            "rows": [
                {
                    "fraction": r["fraction"],
                    "unmasked_rouge1_f1": r["modes"]["unmasked"]["scores"]["rouge1"]["f1"],
                    "tagger_rouge1_f1": r["modes"]["tagger"]["scores"]["rouge1"]["f1"],
                }
                for r in rows
            ]
        }

    # Sequencing

    def stage_runners(self) -> dict[str, Callable[[], dict[str, Any]]]:
        return {
            "gen-data": self.gen_data,
            "train": self.train,
            "train-tagger": self.train_tagger,
            "tune-boundary": self.tune_boundary,
            "analyze-effect": self.analyze_effect,
            "analyze-synergy": self.analyze_synergy,
            "analyze-focus": self.analyze_focus,
            "select-heads": self.select_heads,
            "summarize": self.summarize,
            "evaluate": self.evaluate,
            "sweep-data": self.sweep_data,
        }

    def run_stage(self, stage: str, fn: Optional[Callable[[], dict[str, Any]]] = None) -> dict[str, Any]:
        """Run one stage, tagging any error with the stage name."""
        runner = fn if fn is not None else self.stage_runners().get(stage)
        if runner is None:
            raise ConfigError(f"unknown stage '{stage}'")
        self.out_dir.mkdir(parents=True, exist_ok=True)
        logger.info("Stage %s", stage)
        try:
            return runner()
        except HeadmaskError as e:
            if e.stage is None:
                e.stage = stage
            raise

    def run(self) -> dict[str, Any]:
        """Run the configured stage sequence; stops at the first failing stage."""
        return {stage: self.run_stage(stage) for stage in self.config.stages}
