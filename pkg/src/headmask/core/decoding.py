# src/headmask/core/decoding.py

"""
Decoder Search

Greedy and beam search with min/max length control and a length penalty.

Length convention (used everywhere in this package): a hypothesis' length is
the number of generated tokens excluding eos. eos is forbidden while the length
is below min_len and forced once it reaches max_len. The length-penalty
denominator counts the eos as well, so it is never zero:

    score = log_prob / (length + 1) ** length_penalty
"""

from collections.abc import Sequence
from dataclasses import replace
from typing import Callable, Optional

import numpy as np

from .errors import InputError
from .model import EncoderStates, Seq2SeqModel
from .parallel import ordered_map
from .schema import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    AttentionTrace,
    DecodeParams,
    EncodedExample,
    HeadMaskConfig,
    HeadMaskVector,
    Hypothesis,
    TokenSequence,
)
from .tensor import NEG_INF, Vector, log_softmax_rows

StepFn = Callable[[TokenSequence, Optional[AttentionTrace]], Vector]


def hypothesis_score(hyp: Hypothesis, length_penalty: float) -> float:
    return hyp.log_prob / float(len(hyp.tokens)) ** length_penalty


def _rank_key(hyp: Hypothesis, length_penalty: float) -> tuple[float, TokenSequence]:
    # higher score first; equal scores go to the lexicographically smaller sequence
    return (-hypothesis_score(hyp, length_penalty), hyp.tokens)


def _better(a: Hypothesis, b: Hypothesis, length_penalty: float) -> Hypothesis:
    return min(a, b, key=lambda h: _rank_key(h, length_penalty))


def _step_fn(
    model: Seq2SeqModel,
    enc: EncoderStates,
    mask_cfg: HeadMaskConfig,
    m_tilde: Optional[HeadMaskVector],
    uniform: bool,
) -> StepFn:
    if uniform:
        return lambda prefix, trace: model.uniform_attention_decode_step(enc, prefix, trace)
    return lambda prefix, trace: model.decode_step(enc, prefix, mask_cfg, m_tilde, trace)


def _next_log_probs(step: StepFn, tokens: TokenSequence, dp: DecodeParams) -> Vector:
    logp = log_softmax_rows(step((BOS_ID,) + tokens, None)[np.newaxis, :])[0].copy()
    logp[PAD_ID] = NEG_INF
    logp[BOS_ID] = NEG_INF
    if len(tokens) < dp.min_len:
        logp[EOS_ID] = NEG_INF
    if len(tokens) >= dp.max_len:
        eos = logp[EOS_ID]
        logp[:] = NEG_INF
        logp[EOS_ID] = eos
    return logp


def _search(step: StepFn, dp: DecodeParams) -> Hypothesis:
    alive: list[tuple[TokenSequence, float]] = [((), 0.0)]
    finished: list[Hypothesis] = []

    while alive and len(finished) < dp.beam_size:
        candidates: list[tuple[float, TokenSequence]] = []
        for tokens, log_prob in alive:
            logp = _next_log_probs(step, tokens, dp)
            # only the beam_size best continuations of one beam can survive
            top = np.argsort(-logp, kind="stable")[: dp.beam_size]
            for tok in top:
                if np.isfinite(logp[tok]):
                    candidates.append((log_prob + float(logp[tok]), tokens + (int(tok),)))
        candidates.sort(key=lambda c: (-c[0], c[1]))

        alive = []
        for log_prob, tokens in candidates:
            if tokens[-1] == EOS_ID:
                finished.append(Hypothesis(tokens, log_prob, finished=True))
            else:
                alive.append((tokens, log_prob))
            if len(alive) == dp.beam_size:
                break

    finished.sort(key=lambda h: _rank_key(h, dp.length_penalty))
    return finished[0]


def _best_hypothesis(step: StepFn, dp: DecodeParams) -> Hypothesis:
    """Beam result, replaced by the beam-1 result when that scores better."""
    best = _search(step, dp)
    if dp.beam_size > 1:
        best = _better(best, _search(step, replace(dp, beam_size=1)), dp.length_penalty)
    return best


def beam_decode(
    model: Seq2SeqModel,
    source: TokenSequence,
    dp: DecodeParams,
    mask_cfg: Optional[HeadMaskConfig] = None,
    m_tilde: Optional[HeadMaskVector] = None,
    trace: Optional[AttentionTrace] = None,
    uniform: bool = False,
) -> Hypothesis:
    """Decode one source sequence.

    With beam_size > 1 the result is never worse than the beam-1 result under
    the same settings: both are run and the better one is returned. When a
    trace is given, it receives one entry per generated token (eos included)
    for the returned hypothesis.
    """
    dp.validate(model.cfg.max_positions)
    if mask_cfg is None:
        mask_cfg = HeadMaskConfig.none(model.cfg)
    enc = model.encode(source)
    step = _step_fn(model, enc, mask_cfg, m_tilde, uniform)

    best = _best_hypothesis(step, dp)

    if trace is not None:
        for i in range(len(best.tokens)):
            step((BOS_ID,) + best.tokens[:i], trace)
    return best


def greedy_decode(
    model: Seq2SeqModel,
    source: TokenSequence,
    dp: DecodeParams,
    mask_cfg: Optional[HeadMaskConfig] = None,
    m_tilde: Optional[HeadMaskVector] = None,
    trace: Optional[AttentionTrace] = None,
    uniform: bool = False,
) -> Hypothesis:
    """beam_decode with a beam of one."""
    return beam_decode(
        model, source, replace(dp, beam_size=1), mask_cfg, m_tilde, trace, uniform
    )


def mask_from_labels(labels: Optional[Sequence[bool]]) -> Optional[HeadMaskVector]:
    """Head mask for salience labels, or None when nothing is salient."""
    if labels is None or not np.any(np.asarray(labels, dtype=bool)):
        return None
    return HeadMaskVector.from_labels(labels)


def decode_examples(
    model: Seq2SeqModel,
    examples: Sequence[EncodedExample],
    dp: DecodeParams,
    mask_cfg: Optional[HeadMaskConfig] = None,
    masks: Optional[Sequence[Optional[HeadMaskVector]]] = None,
    uniform: bool = False,
    threads: int = 1,
) -> tuple[list[Hypothesis], int]:
    """Decode every example; returns (hypotheses in input order, fallback count).

    When heads are active, an example whose mask is None (no salient token) is
    decoded unmasked and counted as a fallback. Callers log the count once at
    WARNING per stage.
    """
    if mask_cfg is None:
        mask_cfg = HeadMaskConfig.none(model.cfg)
    unmasked = HeadMaskConfig.none(model.cfg)
    masked = mask_cfg.any_active and not uniform
    if masked and (masks is None or len(masks) != len(examples)):
        raise InputError("one mask per example is required when heads are active")

    def run(i: int) -> Hypothesis:
        source = examples[i].source
        if not masked:
            return beam_decode(model, source, dp, unmasked, None, uniform=uniform)
        assert masks is not None
        if masks[i] is None:
            return beam_decode(model, source, dp, unmasked, None)
        return beam_decode(model, source, dp, mask_cfg, masks[i])

    hyps = ordered_map(run, list(range(len(examples))), threads)
    fallbacks = sum(1 for m in masks or [] if m is None) if masked else 0
    return hyps, fallbacks
