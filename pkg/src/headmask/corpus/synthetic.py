# src/headmask/corpus/synthetic.py

"""
Synthetic Corpus Generator

Each example hides a few salient spans inside distractor filler. The reference
is the spans in source order and the planted labels mark exactly the span
positions.

Content words split into a "key" half, favored inside spans, and a "filler"
half, favored (together with stopwords) in the distractor text, so a model can
learn which tokens tend to be salient. Within an example every span token is
distinct and filler never reuses a span token, so aligning the reference back
to the source recovers the planted labels.
"""

import logging

import numpy as np

from ..core.analysis import stopword_list
from ..core.errors import ConfigError
from ..core.schema import RESERVED_TOKENS, Corpus, Example, GeneratorSpec, Split
from .base import build_corpus

logger = logging.getLogger(__name__)


def word_pools(spec: GeneratorSpec) -> tuple[list[str], list[str], list[str]]:
    """(stopwords, key content words, filler content words) for a vocabulary size."""
    stopwords = list(stopword_list())
    n_content = spec.vocab_size - len(RESERVED_TOKENS) - len(stopwords)
    if n_content < 2:
        raise ConfigError(
            f"data.vocab_size {spec.vocab_size} leaves no room for content words "
            f"(need more than {len(RESERVED_TOKENS) + len(stopwords) + 1})"
        )
    content = [f"w{i:03d}" for i in range(n_content)]
    half = (n_content + 1) // 2
    return stopwords, content[:half], content[half:]


def _draw(rng: np.random.Generator, primary: list[str], secondary: list[str], bias: float) -> str:
    pool = primary if (not secondary or (primary and rng.random() < bias)) else secondary
    return pool[int(rng.integers(len(pool)))]


class SyntheticGenerator:
    """Seeded generator of span-in-filler examples."""

    def __init__(self, spec: GeneratorSpec) -> None:
        spec.validate()
        self.spec = spec
        self.stopwords, self.key_words, self.filler_words = word_pools(spec)
        if len(self.key_words) + len(self.filler_words) < spec.n_salient_spans[1] * spec.span_len[1]:
            raise ConfigError("data.vocab_size is too small for the largest span set")
        self.rng = np.random.default_rng(spec.seed)

    def _spans(self) -> list[list[str]]:
        spec, rng = self.spec, self.rng
        n_spans = int(rng.integers(spec.n_salient_spans[0], spec.n_salient_spans[1] + 1))
        used: set[str] = set()
        spans = []
        for _ in range(n_spans):
            length = int(rng.integers(spec.span_len[0], spec.span_len[1] + 1))
            span = []
            for _ in range(length):
                key = [w for w in self.key_words if w not in used]
                other = [w for w in self.filler_words if w not in used]
                token = _draw(rng, key, other, spec.key_bias)
                used.add(token)
                span.append(token)
            spans.append(span)
        return spans

    def _filler_count(self, n_salient: int) -> int:
        spec = self.spec
        rate = spec.distractor_rate
        if rate == 0.0:
            return 0
        count = int(round(n_salient * rate / (1.0 - rate)))
        lo, hi = spec.source_len
        return max(0, min(max(count, lo - n_salient), hi - n_salient))

    def example(self, index: int, split: Split) -> Example:
        rng = self.rng
        spans = self._spans()
        span_tokens = {t for span in spans for t in span}
        n_salient = sum(len(span) for span in spans)
        n_filler = self._filler_count(n_salient)
        gaps = rng.multinomial(n_filler, [1.0 / (len(spans) + 1)] * (len(spans) + 1))

        filler_pool = [w for w in (*self.stopwords, *self.filler_words) if w not in span_tokens]
        key_pool = [w for w in self.key_words if w not in span_tokens]

        source: list[str] = []
        labels: list[int] = []
        for i, gap in enumerate(gaps):
            for _ in range(int(gap)):
                source.append(_draw(rng, filler_pool, key_pool, self.spec.key_bias))
                labels.append(0)
            if i < len(spans):
                source.extend(spans[i])
                labels.extend([1] * len(spans[i]))

        reference = [t for span in spans for t in span]
        return Example(
            id=f"ex{index:05d}",
            source=tuple(source),
            reference=tuple(reference),
            labels=tuple(labels),
            split=split,
        )

    def generate(self) -> Corpus:
        spec = self.spec
        sizes = (
            (Split.TRAIN, spec.n_train),
            (Split.VALIDATION, spec.n_validation),
            (Split.ANALYSIS, spec.n_analysis),
            (Split.TEST, spec.n_test),
        )
        examples = []
        for split, n in sizes:
            for _ in range(n):
                examples.append(self.example(len(examples), split))
        corpus = build_corpus(examples)
        logger.info(
            "Generated %d examples over %d word types", len(corpus), len(corpus.vocab)
        )
        return corpus


def generate_corpus(spec: GeneratorSpec) -> Corpus:
    """Deterministic under spec.seed."""
    return SyntheticGenerator(spec).generate()
