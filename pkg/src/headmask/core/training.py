# src/headmask/core/training.py

"""
Training

Adam, an early-stopping epoch loop shared by the summarizer and the tagger,
a JSONL training log and a central-difference gradient check.

Per-example gradients are computed independently (optionally on worker
threads) and summed in example order, so results do not depend on the thread
count.
"""

import json
import logging
import math
from collections.abc import Sequence
from pathlib import Path
from typing import Any, Callable, Optional, TextIO, Union

import numpy as np

from .errors import InputError, TrainingError
from .model import Params, Seq2SeqModel, init_params
from .parallel import ordered_map
from .saliency import SaliencyTagger, token_f1
from .schema import Corpus, EncodedExample, ModelConfig, Split, TrainConfig

logger = logging.getLogger(__name__)

LossFn = Callable[[Params], tuple[float, Params]]


class Adam:
    """Adam over the named subset of a parameter dict, updated in place."""

    def __init__(
        self,
        params: Params,
        keys: Sequence[str],
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.keys = sorted(keys)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(params[k]) for k in self.keys}
        self.v = {k: np.zeros_like(params[k]) for k in self.keys}

    def step(self, params: Params, grads: Params) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k in self.keys:
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            m_hat = self.m[k] / c1
            v_hat = self.v[k] / c2
            params[k] -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


class TrainingLog:
    """Line-delimited JSON records: epoch, step, split, loss, metric."""

    def __init__(self, path: Optional[Union[str, Path]] = None) -> None:
        self.records: list[dict[str, Any]] = []
        self._handle: Optional[TextIO] = None
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            self._handle = open(path, "w", encoding="utf-8")

    def record(
        self, epoch: int, step: int, split: str, loss: float, metric: Optional[float] = None
    ) -> None:
        entry = {"epoch": epoch, "step": step, "split": split, "loss": loss, "metric": metric}
        self.records.append(entry)
        if self._handle is not None:
            self._handle.write(json.dumps(entry, sort_keys=True) + "\n")
            self._handle.flush()

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def __enter__(self) -> "TrainingLog":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


def _sum_grads(results: Sequence[tuple[float, int, Params]]) -> tuple[float, int, Params]:
    loss, count, grads = results[0]
    total = {k: v.copy() for k, v in grads.items()}
    for item_loss, item_count, item_grads in results[1:]:
        loss += item_loss
        count += item_count
        for k, v in item_grads.items():
            total[k] += v
    return loss, count, total


def _fit(
    params: Params,
    trainable: Sequence[str],
    n_train: int,
    example_grads: Callable[[int], tuple[float, int, Params]],
    validate: Callable[[], tuple[float, float]],
    tc: TrainConfig,
    log: TrainingLog,
    stage: str,
) -> Params:
    """Shared epoch loop; returns a copy of the best-validation parameters."""
    best = {k: v.copy() for k, v in params.items()}
    best_loss, metric = validate()
    log.record(0, 0, "validation", best_loss, metric)
    if not math.isfinite(best_loss):
        raise TrainingError("validation loss is not finite at initialization", 0, 0, stage)

    adam = Adam(params, trainable, tc.learning_rate, tc.beta1, tc.beta2, tc.eps)
    rng = np.random.default_rng(tc.seed)
    step = 0
    stale = 0
    for epoch in range(1, tc.max_epochs + 1):
        order = rng.permutation(n_train)
        for start in range(0, n_train, tc.batch_size):
            batch = [int(i) for i in order[start : start + tc.batch_size]]
            loss, count, grads = _sum_grads(ordered_map(example_grads, batch, tc.workers))
            step += 1
            mean = loss / count
            if not math.isfinite(mean):
                raise TrainingError("loss diverged", epoch, step, stage)
            for k in adam.keys:
                grads[k] /= count
            adam.step(params, grads)
            log.record(epoch, step, "train", mean)

        val_loss, metric = validate()
        log.record(epoch, step, "validation", val_loss, metric)
        if not math.isfinite(val_loss):
            raise TrainingError("validation loss diverged", epoch, step, stage)
        logger.info(
            "%s epoch %d: validation loss %.4f, metric %.4f", stage, epoch, val_loss, metric
        )
        if val_loss < best_loss:
            best_loss = val_loss
            best = {k: v.copy() for k, v in params.items()}
            stale = 0
        else:
            stale += 1
            if stale >= tc.patience:
                logger.info("%s stopped early after epoch %d", stage, epoch)
                break
    return best


def _splits(corpus: Corpus) -> tuple[list[EncodedExample], list[EncodedExample]]:
    train = [EncodedExample.from_example(ex, corpus.vocab) for ex in corpus.split(Split.TRAIN)]
    if not train:
        raise InputError("corpus has no training examples")
    validation = [
        EncodedExample.from_example(ex, corpus.vocab) for ex in corpus.split(Split.VALIDATION)
    ]
    if not validation:
        logger.warning("No validation split; early stopping uses the training split")
        validation = train
    return train, validation


def train_summarizer(
    corpus: Corpus,
    cfg: ModelConfig,
    tc: TrainConfig,
    log: Optional[TrainingLog] = None,
    init: Optional[Params] = None,
) -> Params:
    """Cross-entropy training with early stopping on validation loss."""
    cfg.validate()
    tc.validate()
    train, validation = _splits(corpus)
    if init is not None:
        params = {k: v.copy() for k, v in init.items()}
    else:
        params = init_params(cfg, tc.seed)
    model = Seq2SeqModel(cfg, params)

    def example_grads(i: int) -> tuple[float, int, Params]:
        return model.loss_and_grads(train[i].source, train[i].reference)

    def validate() -> tuple[float, float]:
        losses = ordered_map(
            lambda ex: model.loss(ex.source, ex.reference), validation, tc.workers
        )
        accs = ordered_map(
            lambda ex: model.token_accuracy(ex.source, ex.reference), validation, tc.workers
        )
        total = sum(n for _, n in losses)
        return sum(v for v, _ in losses) / total, float(np.mean(accs))

    log = log if log is not None else TrainingLog()
    logger.info("Training summarizer on %d examples", len(train))
    return _fit(
        params, sorted(params), len(train), example_grads, validate, tc, log, "train"
    )


def train_tagger(
    corpus: Corpus,
    cfg: ModelConfig,
    tc: TrainConfig,
    encoder_from: Optional[Params] = None,
    log: Optional[TrainingLog] = None,
) -> SaliencyTagger:
    """Mean token BCE training of the saliency tagger.

    Every example must carry salience labels. The encoder starts from
    encoder_from (the summarizer) when given; tc.freeze_encoder decides whether
    it is updated.
    """
    cfg.validate()
    tc.validate()
    train, validation = _splits(corpus)
    for ex in train + validation:
        if ex.labels is None:
            raise InputError(f"example {ex.id} carries no salience labels", stage="train-tagger")
    tagger = SaliencyTagger.initialize(
        cfg, tc.hidden_size, tc.seed, encoder_from, tc.freeze_encoder
    )

    def example_grads(i: int) -> tuple[float, int, Params]:
        assert train[i].labels is not None
        return tagger.loss_and_grads(train[i].source, train[i].labels)

    def validate() -> tuple[float, float]:
        probs = ordered_map(lambda ex: tagger.predict_saliency(ex.source), validation, tc.workers)
        losses = [
            tagger.loss(ex.source, ex.labels) for ex in validation if ex.labels is not None
        ]
        gold = np.concatenate([np.asarray(ex.labels, dtype=bool) for ex in validation])
        f1 = token_f1(np.concatenate(probs) >= 0.5, gold)
        total = sum(n for _, n in losses)
        return sum(v for v, _ in losses) / total, f1

    log = log if log is not None else TrainingLog()
    logger.info(
        "Training tagger on %d examples (encoder %s)",
        len(train),
        "frozen" if tc.freeze_encoder else "trainable",
    )
    best = _fit(
        tagger.params,
        tagger.trainable_keys,
        len(train),
        example_grads,
        validate,
        tc,
        log,
        "train-tagger",
    )
    return SaliencyTagger(cfg, best, tc.freeze_encoder)


def gradient_check(
    loss_fn: LossFn,
    params: Params,
    n_probes: int,
    seed: int = 0,
    h: float = 1e-5,
    keys: Optional[Sequence[str]] = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_fn(params) -> (loss, grads) must read params afresh on every call;
    probes perturb params in place and restore them. Coordinates are drawn
    uniformly over the chosen keys.
    """
    if n_probes < 1:
        raise InputError("gradient_check needs at least one probe")
    names = sorted(keys if keys is not None else params)
    sizes = np.array([params[k].size for k in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    _, grads = loss_fn(params)
    rng = np.random.default_rng(seed)

    worst = 0.0
    for flat in rng.integers(0, int(offsets[-1]), size=n_probes):
        idx = int(np.searchsorted(offsets, flat, side="right")) - 1
        name, pos = names[idx], int(flat - offsets[idx])
        arr = params[name].reshape(-1)
        original = float(arr[pos])
        arr[pos] = original + h
        plus, _ = loss_fn(params)
        arr[pos] = original - h
        minus, _ = loss_fn(params)
        arr[pos] = original

        numeric = (plus - minus) / (2.0 * h)
        analytic = float(grads[name].reshape(-1)[pos])
        # the floor keeps round-off on near-zero gradients from dominating
        rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-6)
        worst = max(worst, rel)
    return worst


def summarizer_loss_fn(
    model: Seq2SeqModel, examples: Sequence[EncodedExample]
) -> LossFn:
    """Mean token cross-entropy over examples, for gradient_check."""

    def loss_fn(params: Params) -> tuple[float, Params]:
        model.params = params
        loss, count, grads = _sum_grads(
            [model.loss_and_grads(ex.source, ex.reference) for ex in examples]
        )
        return loss / count, {k: v / count for k, v in grads.items()}

    return loss_fn


def tagger_loss_fn(
    tagger: SaliencyTagger, examples: Sequence[EncodedExample]
) -> LossFn:
    """Mean token BCE over labeled examples, for gradient_check."""

    def loss_fn(params: Params) -> tuple[float, Params]:
        tagger.params = params
        results = []
        for ex in examples:
            assert ex.labels is not None
            results.append(tagger.loss_and_grads(ex.source, ex.labels))
        loss, count, grads = _sum_grads(results)
        return loss / count, {k: v / count for k, v in grads.items()}

    return loss_fn
