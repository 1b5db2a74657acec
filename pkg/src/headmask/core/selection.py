# src/headmask/core/selection.py

"""
Head Selection

Greedy, per-layer choice of the heads to mask at inference. Heads are ordered
by their oracle-mask effect and evaluated in prefix-nested blocks under
tagger-predicted (system) masks, scored by ROUGE-1 F1 + ROUGE-2 F1.
"""

import logging
from collections.abc import Sequence
from typing import Any, Optional

from .analysis import evaluate_masking, head_order
from .decoding import mask_from_labels
from .errors import InputError
from .model import Seq2SeqModel
from .saliency import SaliencyTagger, system_labels
from .schema import (
    ANALYSIS_DECODE,
    ContentSelectionEffect,
    DecisionBoundary,
    DecodeParams,
    EncodedExample,
    HeadMaskConfig,
    HeadMaskVector,
    HeadSelectionResult,
)

logger = logging.getLogger(__name__)


def block_sizes(n_heads: int, block: int) -> list[int]:
    """k = block, 2*block, ...; a partial final block ends at n_heads."""
    if block < 1:
        raise InputError("selection block must be >= 1")
    ks = list(range(block, n_heads + 1, block))
    if not ks or ks[-1] != n_heads:
        ks.append(n_heads)
    return ks


def system_masks(
    tagger: SaliencyTagger,
    boundary: DecisionBoundary,
    examples: Sequence[EncodedExample],
    threads: int = 1,
) -> list[Optional[HeadMaskVector]]:
    return [mask_from_labels(labels) for labels in system_labels(tagger, boundary, examples, threads)]


def greedy_select_heads(
    model: Seq2SeqModel,
    tagger: SaliencyTagger,
    boundary: DecisionBoundary,
    examples: Sequence[EncodedExample],
    effect: ContentSelectionEffect,
    block: int = 4,
    dp: DecodeParams = ANALYSIS_DECODE,
    threads: int = 1,
) -> HeadSelectionResult:
    """Best (layer, top-k heads) under system masks.

    Ties go to the lower layer, then the smaller k.
    """
    if not examples:
        raise InputError("head selection needs a nonempty analysis set")
    cfg = model.cfg
    masks = system_masks(tagger, boundary, examples, threads)
    fallbacks = sum(1 for m in masks if m is None)
    if fallbacks:
        logger.warning(
            "Tagger marked no token salient in %d of %d examples; those decode unmasked",
            fallbacks,
            len(examples),
        )

    baseline, _ = evaluate_masking(model, examples, dp, HeadMaskConfig.none(cfg), threads=threads)
    trajectory: list[dict[str, Any]] = []
    best: Optional[tuple[float, int, list[int]]] = None
    for layer in range(cfg.n_dec_layers):
        order = head_order(effect, layer)
        for k in block_sizes(cfg.n_heads, block):
            heads = sorted(order[:k])
            scores, _ = evaluate_masking(
                model,
                examples,
                dp,
                HeadMaskConfig.for_heads(cfg, layer, heads),
                masks,
                threads=threads,
            )
            score = scores.r1_plus_r2
            trajectory.append({"layer": layer, "k": k, "heads": heads, "score": score})
            logger.info("layer %d, %d heads: R-1 + R-2 F1 = %.4f", layer, k, score)
            if best is None or score > best[0]:
                best = (score, layer, heads)

    assert best is not None
    score, layer, heads = best
    return HeadSelectionResult(
        layer=layer,
        heads=heads,
        score=score,
        trajectory=trajectory,
        baseline_score=baseline.r1_plus_r2,
        fallbacks=fallbacks,
    )
