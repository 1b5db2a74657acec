# src/headmask/core/rouge.py

"""
ROUGE Scoring

ROUGE-1/ROUGE-2 from clipped n-gram overlap and sentence-level ROUGE-L from the
longest common subsequence. No stemming or stopword removal is applied, so the
numbers are comparable only with other runs of this package. Corpus scores
are macro averages: score each pair, then take the mean of every component.
"""

from collections import Counter
from collections.abc import Hashable, Sequence

from .errors import InputError
from .schema import ROUGE_METRICS, ROUGE_STATS, RougeScore, RougeScores


def _prf(overlap: int, candidate_total: int, reference_total: int) -> RougeScore:
    precision = overlap / candidate_total if candidate_total else 0.0
    recall = overlap / reference_total if reference_total else 0.0
    if precision + recall == 0:
        return RougeScore(precision, recall, 0.0)
    return RougeScore(precision, recall, 2 * precision * recall / (precision + recall))


def ngrams(tokens: Sequence[Hashable], n: int) -> Counter[tuple[Hashable, ...]]:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(
    candidate: Sequence[Hashable], reference: Sequence[Hashable], n: int
) -> RougeScore:
    """Clipped n-gram precision, recall and F1."""
    if n < 1:
        raise InputError("rouge_n needs n >= 1")
    cand = ngrams(candidate, n)
    ref = ngrams(reference, n)
    overlap = sum((cand & ref).values())
    return _prf(overlap, sum(cand.values()), sum(ref.values()))


def lcs_length(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    """Classical LCS dynamic program, one row at a time."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            curr[j] = prev[j - 1] + 1 if x == y else max(prev[j], curr[j - 1])
        prev = curr
    return prev[-1]


def rouge_l(candidate: Sequence[Hashable], reference: Sequence[Hashable]) -> RougeScore:
    return _prf(lcs_length(candidate, reference), len(candidate), len(reference))


def rouge_scores(
    candidate: Sequence[Hashable], reference: Sequence[Hashable]
) -> RougeScores:
    return RougeScores(
        rouge1=rouge_n(candidate, reference, 1),
        rouge2=rouge_n(candidate, reference, 2),
        rougeL=rouge_l(candidate, reference),
    )


def corpus_rouge(
    pairs: Sequence[tuple[Sequence[Hashable], Sequence[Hashable]]],
) -> RougeScores:
    """Macro average of per-pair scores over (candidate, reference) pairs."""
    if not pairs:
        raise InputError("corpus_rouge needs at least one pair")
    per_pair = [rouge_scores(c, r) for c, r in pairs]
    means = {
        m: RougeScore(
            **{s: sum(p.get(m, s) for p in per_pair) / len(per_pair) for s in ROUGE_STATS}
        )
        for m in ROUGE_METRICS
    }
    return RougeScores(**means)
