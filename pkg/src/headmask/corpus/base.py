# src/headmask/corpus/base.py

"""
Base Corpus Reader

Abstract base class for corpus sources, plus the shared corpus assembly that
builds the vocabulary and fills in missing salience labels.
"""

import logging
from abc import ABC, abstractmethod
from collections.abc import Sequence
from typing import Any, Optional

from ..core.errors import IngestionError
from ..core.saliency import oracle_labels
from ..core.schema import Corpus, Example, Split, Vocab

logger = logging.getLogger(__name__)


def build_corpus(examples: Sequence[Example]) -> Corpus:
    """Assemble a corpus; the vocabulary is every token, sorted, after the reserved ids.

    Examples without labels get oracle labels from aligning the reference.
    """
    seen: set[str] = set()
    for ex in examples:
        if ex.id in seen:
            raise IngestionError(f"duplicate example id '{ex.id}'")
        seen.add(ex.id)

    vocab = Vocab(sorted({tok for ex in examples for tok in (*ex.source, *ex.reference)}))
    labeled = []
    computed = 0
    for ex in examples:
        if ex.labels is None:
            labels = oracle_labels(vocab.encode(ex.source), vocab.encode(ex.reference))
            ex = Example(ex.id, ex.source, ex.reference, tuple(int(b) for b in labels), ex.split)
            computed += 1
        labeled.append(ex)
    if computed:
        logger.debug("Computed oracle labels for %d examples", computed)
    return Corpus(examples=labeled, vocab=vocab)


class BaseCorpusReader(ABC):
    """Abstract base class for corpus readers."""

    def __init__(self) -> None:
        self.line_errors: list[tuple[int, str]] = []

    @abstractmethod
    def read(self, content: str) -> Corpus:
        """Parse corpus content into a validated Corpus."""
        pass

    def _tokens(self, value: Any, field: str) -> tuple[str, ...]:
        """Token list from a list of strings or a whitespace-delimited string."""
        if isinstance(value, str):
            tokens = value.lower().split()
        elif isinstance(value, list) and all(isinstance(t, str) for t in value):
            tokens = [t.lower() for t in value]
        else:
            raise ValueError(f"'{field}' must be a string or a list of strings")
        if not tokens:
            raise ValueError(f"'{field}' must not be empty")
        if any(not t or t.split() != [t] for t in tokens):
            raise ValueError(f"'{field}' tokens must be nonempty and free of whitespace")
        return tuple(tokens)

    def _labels(self, value: Any, length: int) -> Optional[tuple[int, ...]]:
        if value is None:
            return None
        if not isinstance(value, list) or any(v not in (0, 1) or isinstance(v, float) for v in value):
            raise ValueError("'labels' must be a list of 0/1 values")
        if len(value) != length:
            raise ValueError(f"'labels' has {len(value)} entries for {length} source tokens")
        return tuple(int(v) for v in value)

    def _split(self, value: Any) -> Split:
        if value is None:
            return Split.TRAIN
        try:
            return Split(value)
        except ValueError:
            choices = ", ".join(s.value for s in Split)
            raise ValueError(f"'split' must be one of: {choices}") from None
