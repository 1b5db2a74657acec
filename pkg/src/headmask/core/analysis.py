# src/headmask/core/analysis.py

"""
Head Analysis

Content-selection effect of oracle masking per encoder-decoder head, synergy
curves from masking several heads of a layer together, and attention-focus
tallies of which source words heads attend to while generating.

All analyses decode greedily (beam 1) by default.
"""

import logging
import string
from collections.abc import Sequence
from functools import lru_cache
from importlib import resources
from typing import Optional

import numpy as np
import numpy.typing as npt

from .decoding import decode_examples, greedy_decode, mask_from_labels
from .errors import InputError
from .model import Seq2SeqModel
from .parallel import ordered_map
from .rouge import corpus_rouge
from .schema import (
    ANALYSIS_DECODE,
    EOS_ID,
    RESERVED_TOKENS,
    ROUGE_METRICS,
    ROUGE_STATS,
    AttentionTrace,
    ContentSelectionEffect,
    CurvePoint,
    DecodeParams,
    EncodedExample,
    FocusCategory,
    FocusTally,
    HeadMaskConfig,
    HeadMaskVector,
    Hypothesis,
    LayerSynergy,
    RougeScores,
    SynergyReport,
    Vocab,
)

logger = logging.getLogger(__name__)


@lru_cache(maxsize=1)
def stopword_list() -> tuple[str, ...]:
    """The shipped stopword list (package data), in file order."""
    text = resources.files("headmask").joinpath("data/stopwords.txt").read_text("utf-8")
    return tuple(
        line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


def load_stopwords() -> frozenset[str]:
    return frozenset(stopword_list())


def is_content_word(token: str, stopwords: Optional[frozenset[str]] = None) -> bool:
    """Not a stopword, not punctuation, not a reserved token."""
    if token in RESERVED_TOKENS or not token:
        return False
    if all(ch in string.punctuation for ch in token):
        return False
    return token.lower() not in (stopwords if stopwords is not None else load_stopwords())


def score_hypotheses(
    hyps: Sequence[Hypothesis], examples: Sequence[EncodedExample]
) -> RougeScores:
    return corpus_rouge([(h.content, ex.reference) for h, ex in zip(hyps, examples)])


def oracle_masks(examples: Sequence[EncodedExample]) -> list[Optional[HeadMaskVector]]:
    masks = []
    for ex in examples:
        if ex.labels is None:
            raise InputError(f"example {ex.id} carries no salience labels")
        masks.append(mask_from_labels(ex.labels))
    return masks


def evaluate_masking(
    model: Seq2SeqModel,
    examples: Sequence[EncodedExample],
    dp: DecodeParams,
    mask_cfg: HeadMaskConfig,
    masks: Optional[Sequence[Optional[HeadMaskVector]]] = None,
    uniform: bool = False,
    threads: int = 1,
) -> tuple[RougeScores, int]:
    """Corpus ROUGE of decoding with the given heads masked; returns (scores, fallbacks)."""
    if not examples:
        raise InputError("cannot evaluate on an empty example set")
    hyps, fallbacks = decode_examples(model, examples, dp, mask_cfg, masks, uniform, threads)
    return score_hypotheses(hyps, examples), fallbacks


def content_selection_effect(
    model: Seq2SeqModel,
    examples: Sequence[EncodedExample],
    dp: DecodeParams = ANALYSIS_DECODE,
    threads: int = 1,
) -> ContentSelectionEffect:
    """Oracle-mask each head alone and compare with uniform cross-attention."""
    cfg = model.cfg
    masks = oracle_masks(examples)
    r_uni, _ = evaluate_masking(
        model, examples, dp, HeadMaskConfig.none(cfg), uniform=True, threads=threads
    )
    r_base, _ = evaluate_masking(model, examples, dp, HeadMaskConfig.none(cfg), threads=threads)

    per_head: list[list[RougeScores]] = []
    fallbacks = 0
    for layer in range(cfg.n_dec_layers):
        row = []
        for head in range(cfg.n_heads):
            scores, fallbacks = evaluate_masking(
                model,
                examples,
                dp,
                HeadMaskConfig.for_heads(cfg, layer, [head]),
                masks,
                threads=threads,
            )
            row.append(scores)
            logger.debug(
                "layer %d head %d: R-1 F1 %.4f", layer, head, scores.rouge1.f1
            )
        per_head.append(row)

    if fallbacks:
        logger.warning(
            "%d analysis examples have no oracle-salient token and were decoded unmasked",
            fallbacks,
        )
    return ContentSelectionEffect(r_uni=r_uni, per_head=per_head, r_base=r_base, fallbacks=fallbacks)


def head_order(effect: ContentSelectionEffect, layer: int) -> list[int]:
    """Heads by individual ROUGE-1 F1 improvement, best first; ties to lower index."""
    n_heads = len(effect.per_head[layer])
    return sorted(range(n_heads), key=lambda h: (-effect.effect(layer, h), h))


def synergy_analysis(
    model: Seq2SeqModel,
    examples: Sequence[EncodedExample],
    effect: ContentSelectionEffect,
    dp: DecodeParams = ANALYSIS_DECODE,
    threads: int = 1,
) -> SynergyReport:
    """Incremental masking curves per layer, plus joint-vs-sum comparison."""
    cfg = model.cfg
    if len(effect.per_head) != cfg.n_dec_layers:
        raise InputError("content-selection effect does not match the model's layers")
    masks = oracle_masks(examples)
    r_uni = effect.r_uni
    layers = []
    for layer in range(cfg.n_dec_layers):
        order = head_order(effect, layer)
        curve = []
        for k in range(1, cfg.n_heads + 1):
            heads = order[:k]
            if k == 1:
                scores = effect.per_head[layer][heads[0]]
            else:
                scores, _ = evaluate_masking(
                    model,
                    examples,
                    dp,
                    HeadMaskConfig.for_heads(cfg, layer, heads),
                    masks,
                    threads=threads,
                )
            curve.append(
                CurvePoint(
                    k=k,
                    heads=list(heads),
                    scores=scores,
                    improvement_f1=scores.rouge1.f1 - r_uni.rouge1.f1,
                    improvement_recall=scores.rouge1.recall - r_uni.rouge1.recall,
                    non_positive_head=effect.effect(layer, heads[-1]) <= 0.0,
                )
            )
        joint_all = curve[-1].scores
        sum_of_individuals = {
            m: {
                s: sum(effect.effect(layer, h, m, s) for h in range(cfg.n_heads))
                for s in ROUGE_STATS
            }
            for m in ROUGE_METRICS
        }
        layers.append(
            LayerSynergy(
                layer=layer,
                order=order,
                curve=curve,
                joint_all=joint_all,
                joint_improvement=joint_all.minus(r_uni),
                sum_of_individuals=sum_of_individuals,
            )
        )
    return SynergyReport(layers=layers)


def _focus_counts(
    model: Seq2SeqModel,
    ex: EncodedExample,
    vocab: Vocab,
    stopwords: frozenset[str],
    dp: DecodeParams,
) -> tuple[npt.NDArray[np.int64], npt.NDArray[np.int64]]:
    cfg = model.cfg
    counts = np.zeros((cfg.n_dec_layers, cfg.n_heads, len(FocusCategory)), dtype=np.int64)
    totals = np.zeros((cfg.n_dec_layers, cfg.n_heads), dtype=np.int64)
    trace = AttentionTrace()
    hyp = greedy_decode(model, ex.source, dp, trace=trace)

    reference = set(ex.reference)
    content = [is_content_word(tok, stopwords) for tok in vocab.decode(ex.source)]
    last = len(ex.source) - 1
    idx = {c: i for i, c in enumerate(FocusCategory)}

    for step, generated in enumerate(hyp.tokens):
        if generated == EOS_ID:
            continue
        for layer in range(cfg.n_dec_layers):
            for head in range(cfg.n_heads):
                # np.argmax returns the lowest index among ties
                pos = int(np.argmax(trace.steps[step][layer][head]))
                attendee = ex.source[pos]
                copy = attendee == generated
                cell = counts[layer, head]
                totals[layer, head] += 1
                if attendee in reference:
                    cell[idx[FocusCategory.COPY_SALIENT if copy else FocusCategory.NONCOPY_SALIENT]] += 1
                if content[pos]:
                    cell[idx[FocusCategory.COPY_CONTENT if copy else FocusCategory.NONCOPY_CONTENT]] += 1
                if pos == 0:
                    cell[idx[FocusCategory.FIRST]] += 1
                if pos == last:
                    cell[idx[FocusCategory.LAST]] += 1
    return counts, totals


def attention_focus(
    model: Seq2SeqModel,
    examples: Sequence[EncodedExample],
    vocab: Vocab,
    dp: DecodeParams = ANALYSIS_DECODE,
    stopwords: Optional[frozenset[str]] = None,
    threads: int = 1,
) -> FocusTally:
    """Tally the categories of each head's attendee over unmasked greedy decoding."""
    words = stopwords if stopwords is not None else load_stopwords()
    results = ordered_map(
        lambda ex: _focus_counts(model, ex, vocab, words, dp), examples, threads
    )
    cfg = model.cfg
    counts = np.zeros((cfg.n_dec_layers, cfg.n_heads, len(FocusCategory)), dtype=np.int64)
    totals = np.zeros((cfg.n_dec_layers, cfg.n_heads), dtype=np.int64)
    for c, t in results:
        counts += c
        totals += t
    return FocusTally(counts=counts, totals=totals)
