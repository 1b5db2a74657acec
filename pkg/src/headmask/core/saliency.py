# src/headmask/core/saliency.py

"""
Content Selection

Oracle salience labels from reference alignment, the token tagger that predicts
them, and the search for the tagger's decision boundary.
"""

import logging
from collections.abc import Sequence
from typing import Any, Optional

import numpy as np
import numpy.typing as npt

from .errors import InputError
from .model import (
    Params,
    check_params,
    encoder_backward,
    encoder_forward,
    expected_shapes,
    init_params,
    zeros_like_params,
)
from .parallel import ordered_map
from .schema import (
    DecisionBoundary,
    EncodedExample,
    ModelConfig,
    SaliencyLabels,
    TokenSequence,
)
from .tensor import Vector, sigmoid, softplus

logger = logging.getLogger(__name__)

BOUNDARY_GRID = tuple(round(0.10 + 0.01 * i, 2) for i in range(31))


def oracle_labels(source: TokenSequence, reference: TokenSequence) -> SaliencyLabels:
    """Mark source tokens aligned to the reference by iterative longest runs.

    Repeatedly take the longest common contiguous run between an unmatched
    reference fragment and not-yet-aligned source positions (ties: earliest
    source start, then earliest reference start), mark it, and split the
    reference fragment around it. Each source position aligns at most once.
    """
    labels = np.zeros(len(source), dtype=bool)
    fragments = [(0, len(reference))]

    while fragments:
        best: Optional[tuple[int, int, int, int]] = None  # (-length, src, ref, fragment)
        for f, (lo, hi) in enumerate(fragments):
            prev = [0] * (hi - lo + 1)
            for i, tok in enumerate(source):
                curr = [0] * (hi - lo + 1)
                if not labels[i]:
                    for j in range(lo, hi):
                        if reference[j] == tok:
                            run = prev[j - lo] + 1
                            curr[j - lo + 1] = run
                            key = (-run, i - run + 1, j - run + 1, f)
                            if best is None or key < best:
                                best = key
                prev = curr
        if best is None:
            break
        neg_len, src_start, ref_start, f = best
        length = -neg_len
        labels[src_start : src_start + length] = True
        lo, hi = fragments.pop(f)
        pieces = [(lo, ref_start), (ref_start + length, hi)]
        fragments[f:f] = [(a, b) for a, b in pieces if b > a]

    return labels


def threshold_labels(
    probabilities: npt.NDArray[np.float64], boundary: DecisionBoundary
) -> SaliencyLabels:
    """A token is salient when its probability is at least the boundary."""
    return np.asarray(probabilities >= boundary.value, dtype=bool)


def token_f1(predicted: npt.NDArray[np.bool_], gold: npt.NDArray[np.bool_]) -> float:
    """Micro F1 over all tokens; 0.0 when there are no positives at all."""
    tp = int(np.sum(predicted & gold))
    fp = int(np.sum(predicted & ~gold))
    fn = int(np.sum(~predicted & gold))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def best_boundary(
    probabilities: Sequence[npt.NDArray[np.float64]],
    gold: Sequence[npt.NDArray[np.bool_]],
) -> tuple[DecisionBoundary, float]:
    """Exhaustive search over 0.10..0.40; ties go to the smallest boundary."""
    if not probabilities:
        raise InputError("boundary search needs at least one example")
    probs = np.concatenate([np.asarray(p, dtype=np.float64) for p in probabilities])
    labels = np.concatenate([np.asarray(g, dtype=bool) for g in gold])
    if probs.shape != labels.shape:
        raise InputError("probabilities and labels differ in length")

    best_value, best_f1 = BOUNDARY_GRID[0], -1.0
    for value in BOUNDARY_GRID:
        f1 = token_f1(probs >= value, labels)
        if f1 > best_f1:
            best_value, best_f1 = value, f1
    return DecisionBoundary(best_value, best_f1), best_f1


class SaliencyTagger:
    """Encoder plus a two-layer tanh MLP scoring each source token.

    p_i = sigmoid(w2 . tanh(W1 h_i + b1) + b2)

    The encoder is the summarizer's (copied at construction). With
    freeze_encoder set, only the MLP receives gradients.
    """

    MLP_KEYS = ("mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2")

    def __init__(
        self, cfg: ModelConfig, params: Params, freeze_encoder: bool = True
    ) -> None:
        check_params(cfg, params, self.encoder_keys(cfg))
        for name in self.MLP_KEYS:
            if name not in params:
                raise InputError(f"tagger parameter '{name}' is missing")
        if params["mlp.w2"].shape[1] != 1:
            raise InputError("tagger output layer must have width 1")
        self.cfg = cfg
        self.params = params
        self.freeze_encoder = freeze_encoder

    @staticmethod
    def encoder_keys(cfg: ModelConfig) -> list[str]:
        return [k for k in expected_shapes(cfg) if k == "embed" or k.startswith("enc.")]

    @classmethod
    def initialize(
        cls,
        cfg: ModelConfig,
        hidden_size: int,
        seed: int = 0,
        encoder_from: Optional[Params] = None,
        freeze_encoder: bool = True,
    ) -> "SaliencyTagger":
        source = encoder_from if encoder_from is not None else init_params(cfg, seed)
        params: Params = {k: source[k].copy() for k in cls.encoder_keys(cfg)}
        rng = np.random.default_rng(seed + 1)
        d = cfg.d_model
        params["mlp.w1"] = rng.normal(0.0, 1.0 / np.sqrt(d), (d, hidden_size))
        params["mlp.b1"] = np.zeros(hidden_size)
        params["mlp.w2"] = rng.normal(0.0, 1.0 / np.sqrt(hidden_size), (hidden_size, 1))
        params["mlp.b2"] = np.zeros(1)
        return cls(cfg, params, freeze_encoder)

    @property
    def hidden_size(self) -> int:
        return int(self.params["mlp.w1"].shape[1])

    @property
    def trainable_keys(self) -> list[str]:
        if self.freeze_encoder:
            return list(self.MLP_KEYS)
        return sorted(self.params)

    def _check_source(self, source: TokenSequence) -> None:
        if not source:
            raise InputError("source must not be empty")
        if len(source) > self.cfg.max_positions:
            raise InputError(
                f"source length {len(source)} exceeds max_positions {self.cfg.max_positions}"
            )
        if min(source) < 0 or max(source) >= self.cfg.vocab_size:
            raise InputError(f"source contains ids outside [0, {self.cfg.vocab_size})")

    def _forward(self, source: TokenSequence) -> tuple[Vector, Any]:
        self._check_source(source)
        states, enc_cache = encoder_forward(self.params, self.cfg, source)
        hidden = np.tanh(states @ self.params["mlp.w1"] + self.params["mlp.b1"])
        z = (hidden @ self.params["mlp.w2"] + self.params["mlp.b2"])[:, 0]
        return z, (states, enc_cache, hidden)

    def predict_saliency(self, source: TokenSequence) -> Vector:
        """Per-token salience probabilities, strictly inside (0, 1)."""
        z, _ = self._forward(source)
        return sigmoid(z)

    def loss_and_grads(
        self, source: TokenSequence, labels: SaliencyLabels
    ) -> tuple[float, int, Params]:
        """Summed token BCE with gradients for every tagger parameter."""
        y = np.asarray(labels, dtype=np.float64)
        if y.shape != (len(source),):
            raise InputError("labels must match the source length")
        z, (states, enc_cache, hidden) = self._forward(source)
        loss = float(np.sum(softplus(z) - y * z))

        grads = zeros_like_params(self.params)
        dz = (sigmoid(z) - y)[:, np.newaxis]
        grads["mlp.w2"] += hidden.T @ dz
        grads["mlp.b2"] += dz.sum(axis=0)
        dpre = (dz @ self.params["mlp.w2"].T) * (1.0 - hidden * hidden)
        grads["mlp.w1"] += states.T @ dpre
        grads["mlp.b1"] += dpre.sum(axis=0)
        if not self.freeze_encoder:
            dstates = dpre @ self.params["mlp.w1"].T
            encoder_backward(dstates, enc_cache, self.params, self.cfg, grads)
        return loss, len(source), grads

    def loss(self, source: TokenSequence, labels: SaliencyLabels) -> tuple[float, int]:
        z, _ = self._forward(source)
        y = np.asarray(labels, dtype=np.float64)
        return float(np.sum(softplus(z) - y * z)), len(source)


def predict_saliency(tagger: SaliencyTagger, source: TokenSequence) -> Vector:
    return tagger.predict_saliency(source)


def tune_boundary(
    tagger: SaliencyTagger,
    validation: Sequence[EncodedExample],
    threads: int = 1,
) -> tuple[DecisionBoundary, float]:
    """Pick the boundary maximizing micro token F1 on labeled validation data."""
    if not validation:
        raise InputError("boundary tuning needs a nonempty validation split")
    gold = []
    for ex in validation:
        if ex.labels is None:
            raise InputError(f"example {ex.id} carries no salience labels")
        gold.append(ex.labels)
    probs = ordered_map(lambda ex: tagger.predict_saliency(ex.source), validation, threads)
    boundary, f1 = best_boundary(probs, gold)
    logger.info("Decision boundary %.2f (token F1 %.4f)", boundary.value, f1)
    return boundary, f1


def system_labels(
    tagger: SaliencyTagger,
    boundary: DecisionBoundary,
    examples: Sequence[EncodedExample],
    threads: int = 1,
) -> list[SaliencyLabels]:
    """Tagger-predicted labels for every example, in input order."""
    return ordered_map(
        lambda ex: threshold_labels(tagger.predict_saliency(ex.source), boundary),
        examples,
        threads,
    )
