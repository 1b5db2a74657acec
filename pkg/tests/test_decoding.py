#!/usr/bin/env python3
"""
Test suite for beam search and batch decoding
"""

import sys
import unittest
from pathlib import Path

import numpy as np

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from headmask.core.decoding import (
    _best_hypothesis,
    _better,
    _search,
    beam_decode,
    decode_examples,
    greedy_decode,
    hypothesis_score,
    mask_from_labels,
)
from headmask.core.errors import ConfigError, InputError
from headmask.core.model import Seq2SeqModel
from headmask.core.schema import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    AttentionTrace,
    DecodeParams,
    HeadMaskConfig,
    HeadMaskVector,
    Hypothesis,
)
from headmask.core.tensor import NEG_INF, log_softmax_rows
from tests.fixtures import TINY, random_examples


def manual_greedy(model, source, dp):
    """Step-by-step argmax with the same length rules as the decoder."""
    enc = model.encode(source)
    tokens = ()
    log_prob = 0.0
    while True:
        logits = model.decode_step(enc, (BOS_ID,) + tokens, HeadMaskConfig.none(model.cfg))
        logp = log_softmax_rows(logits[np.newaxis, :])[0].copy()
        logp[PAD_ID] = logp[BOS_ID] = -np.inf
        if len(tokens) < dp.min_len:
            logp[EOS_ID] = -np.inf
        if len(tokens) >= dp.max_len:
            forced = np.full_like(logp, -np.inf)
            forced[EOS_ID] = logp[EOS_ID]
            logp = forced
        tok = int(np.argmax(logp))
        log_prob += float(logp[tok])
        tokens += (tok,)
        if tok == EOS_ID:
            return tokens, log_prob


class TestGreedy(unittest.TestCase):
    """Beam of one."""

    def setUp(self):
        self.model = Seq2SeqModel.initialize(TINY, seed=11)
        self.dp = DecodeParams(beam_size=1, min_len=2, max_len=6, length_penalty=1.0)

    def test_matches_step_by_step_argmax(self):
        for ex in random_examples(4, seed=1):
            hyp = greedy_decode(self.model, ex.source, self.dp)
            tokens, log_prob = manual_greedy(self.model, ex.source, self.dp)
            self.assertEqual(hyp.tokens, tokens)
            self.assertAlmostEqual(hyp.log_prob, log_prob, places=10)

    def test_greedy_ignores_configured_beam(self):
        wide = DecodeParams(beam_size=4, min_len=2, max_len=6, length_penalty=1.0)
        source = (4, 5, 6, 7)
        self.assertEqual(
            greedy_decode(self.model, source, wide).tokens,
            beam_decode(self.model, source, self.dp).tokens,
        )


class TestBeamSearch(unittest.TestCase):
    """Length rules, scoring and the beam-versus-greedy guarantee."""

    def setUp(self):
        self.model = Seq2SeqModel.initialize(TINY, seed=12)
        self.examples = random_examples(5, seed=3)

    def test_length_bounds_and_eos(self):
        dp = DecodeParams(beam_size=3, min_len=3, max_len=5, length_penalty=1.5)
        for ex in self.examples:
            hyp = beam_decode(self.model, ex.source, dp)
            self.assertEqual(hyp.tokens[-1], EOS_ID)
            self.assertTrue(hyp.finished)
            self.assertGreaterEqual(hyp.length, dp.min_len)
            self.assertLessEqual(hyp.length, dp.max_len)
            self.assertLessEqual(hyp.log_prob, 0.0)
            self.assertNotIn(PAD_ID, hyp.tokens)
            self.assertNotIn(BOS_ID, hyp.tokens)

    def test_zero_max_len_forces_immediate_eos(self):
        dp = DecodeParams(beam_size=2, min_len=0, max_len=0, length_penalty=1.0)
        hyp = beam_decode(self.model, (4, 5), dp)
        self.assertEqual(hyp.tokens, (EOS_ID,))
        self.assertEqual(hyp.content, ())

    def test_zero_length_penalty_is_raw_log_prob(self):
        hyp = Hypothesis(tokens=(5, 6, EOS_ID), log_prob=-2.5, finished=True)
        self.assertEqual(hypothesis_score(hyp, 0.0), -2.5)
        self.assertAlmostEqual(hypothesis_score(hyp, 1.0), -2.5 / 3)

    def test_wide_beam_never_scores_below_greedy(self):
        penalty = 1.0
        wide = DecodeParams(beam_size=5, min_len=1, max_len=6, length_penalty=penalty)
        narrow = DecodeParams(beam_size=1, min_len=1, max_len=6, length_penalty=penalty)
        wide_scores, narrow_scores = [], []
        for ex in self.examples:
            w = hypothesis_score(beam_decode(self.model, ex.source, wide), penalty)
            n = hypothesis_score(beam_decode(self.model, ex.source, narrow), penalty)
            self.assertGreaterEqual(w, n - 1e-12)
            wide_scores.append(w)
            narrow_scores.append(n)
        self.assertGreaterEqual(np.mean(wide_scores), np.mean(narrow_scores) - 1e-12)

    def test_all_salient_mask_passthrough(self):
        dp = DecodeParams(beam_size=3, min_len=1, max_len=6, length_penalty=1.0)
        for ex in self.examples:
            plain = beam_decode(self.model, ex.source, dp)
            masked = beam_decode(
                self.model,
                ex.source,
                dp,
                HeadMaskConfig.all(TINY),
                HeadMaskVector.from_labels([1] * len(ex.source)),
            )
            self.assertEqual(plain.tokens, masked.tokens)

    def test_trace_replays_returned_hypothesis(self):
        dp = DecodeParams(beam_size=3, min_len=1, max_len=6, length_penalty=1.0)
        trace = AttentionTrace()
        hyp = beam_decode(self.model, self.examples[0].source, dp, trace=trace)
        self.assertEqual(len(trace), len(hyp.tokens))
        for step in trace.steps:
            self.assertEqual(len(step), TINY.n_dec_layers)
            for layer in step:
                for row in layer:
                    self.assertEqual(row.shape, (len(self.examples[0].source),))

    def test_max_len_must_fit_positions(self):
        dp = DecodeParams(beam_size=1, min_len=0, max_len=TINY.max_positions, length_penalty=1.0)
        with self.assertRaises(ConfigError):
            beam_decode(self.model, (4, 5), dp)

    def test_longest_prefix_fills_positions_exactly(self):
        # bos plus max_len tokens is the longest decoder input; eos is never fed back
        longest = TINY.max_positions - 1
        dp = DecodeParams(beam_size=2, min_len=longest, max_len=longest, length_penalty=1.0)
        trace = AttentionTrace()
        hyp = beam_decode(self.model, (4, 5, 6), dp, trace=trace)
        self.assertEqual(hyp.length, longest)
        self.assertEqual(hyp.tokens[-1], EOS_ID)
        self.assertEqual(len(trace), longest + 1)


def table_step(table, vocab_size=8):
    """Step function over fixed next-token logits keyed by the decoder prefix."""

    def step(prefix, trace):
        logits = np.full(vocab_size, NEG_INF)
        for token, value in table[prefix].items():
            logits[token] = value
        return logits

    return step


class TestTieBreaking(unittest.TestCase):
    """Equal scores go to the lexicographically smaller token sequence."""

    # (5, eos) finishes first; (4, 6, eos) finishes later with the same log-prob
    TABLE = {
        (BOS_ID,): {4: 0.0, 5: 0.0},
        (BOS_ID, 4): {6: 0.0},
        (BOS_ID, 5): {EOS_ID: 0.0},
        (BOS_ID, 4, 6): {EOS_ID: 0.0},
    }

    def test_search_prefers_smaller_sequence(self):
        dp = DecodeParams(beam_size=2, min_len=1, max_len=3, length_penalty=0.0)
        hyp = _search(table_step(self.TABLE), dp)
        self.assertEqual(hyp.tokens, (4, 6, EOS_ID))
        self.assertAlmostEqual(hyp.log_prob, -np.log(2.0), places=12)

    def test_beam_versus_greedy_prefers_smaller_sequence(self):
        small = Hypothesis(tokens=(4, 6, EOS_ID), log_prob=-0.5, finished=True)
        large = Hypothesis(tokens=(5, EOS_ID), log_prob=-0.5, finished=True)
        self.assertEqual(_better(large, small, 0.0), small)
        self.assertEqual(_better(small, large, 0.0), small)
        self.assertEqual(_better(small, large, 1.0), small)
        # a higher score beats a smaller sequence
        self.assertEqual(_better(Hypothesis((5, EOS_ID), -0.1, True), small, 0.0).tokens, (5, EOS_ID))

    def test_best_hypothesis_on_tied_table(self):
        dp = DecodeParams(beam_size=2, min_len=1, max_len=3, length_penalty=0.0)
        self.assertEqual(_best_hypothesis(table_step(self.TABLE), dp).tokens, (4, 6, EOS_ID))


class TestDecodeExamples(unittest.TestCase):
    """Batch decoding with per-example masks."""

    def setUp(self):
        self.model = Seq2SeqModel.initialize(TINY, seed=13)
        self.examples = random_examples(4, seed=4)
        self.dp = DecodeParams(beam_size=1, min_len=1, max_len=5, length_penalty=1.0)

    def test_mask_from_labels(self):
        self.assertIsNone(mask_from_labels([0, 0]))
        self.assertIsNone(mask_from_labels(None))
        mask = mask_from_labels([0, 1])
        self.assertIsNotNone(mask)
        self.assertEqual(mask.values[1], 0.0)

    def test_fallbacks_decode_unmasked(self):
        mask_cfg = HeadMaskConfig.for_heads(TINY, 0, [1])
        masks = [mask_from_labels(ex.labels) for ex in self.examples]
        masks[1] = None
        hyps, fallbacks = decode_examples(self.model, self.examples, self.dp, mask_cfg, masks)
        self.assertEqual(fallbacks, 1)
        unmasked = greedy_decode(self.model, self.examples[1].source, self.dp)
        self.assertEqual(hyps[1].tokens, unmasked.tokens)

    def test_missing_masks_rejected(self):
        with self.assertRaises(InputError):
            decode_examples(
                self.model, self.examples, self.dp, HeadMaskConfig.all(TINY), None
            )

    def test_thread_count_does_not_change_results(self):
        one, _ = decode_examples(self.model, self.examples, self.dp, threads=1)
        many, _ = decode_examples(self.model, self.examples, self.dp, threads=3)
        self.assertEqual([h.tokens for h in one], [h.tokens for h in many])

    def test_uniform_mode_ignores_masks(self):
        hyps, fallbacks = decode_examples(
            self.model, self.examples, self.dp, HeadMaskConfig.none(TINY), uniform=True
        )
        self.assertEqual(len(hyps), len(self.examples))
        self.assertEqual(fallbacks, 0)


if __name__ == "__main__":
    unittest.main()
