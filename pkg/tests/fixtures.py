"""
Small models and corpora shared by the test modules
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import numpy as np

from headmask.core.saliency import oracle_labels
from headmask.core.schema import EncodedExample, ModelConfig

TINY = ModelConfig(
    vocab_size=12,
    d_model=8,
    n_heads=2,
    n_enc_layers=1,
    n_dec_layers=2,
    d_ff=16,
    max_positions=32,
)


def random_examples(n: int, seed: int = 0, cfg: ModelConfig = TINY) -> list[EncodedExample]:
    """Random sources over the non-reserved ids; references are subsequences."""
    rng = np.random.default_rng(seed)
    examples = []
    for i in range(n):
        length = int(rng.integers(3, 8))
        source = tuple(int(t) for t in rng.integers(4, cfg.vocab_size, size=length))
        start = int(rng.integers(0, length - 1))
        reference = source[start : start + int(rng.integers(1, 4))]
        examples.append(
            EncodedExample(
                id=f"t{i}",
                source=source,
                reference=reference,
                labels=oracle_labels(source, reference),
            )
        )
    return examples
