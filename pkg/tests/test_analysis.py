#!/usr/bin/env python3
"""
Test suite for content-selection effect, synergy and attention focus
"""

import sys
import unittest
from pathlib import Path

import numpy as np

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from headmask.core.analysis import (
    attention_focus,
    content_selection_effect,
    evaluate_masking,
    head_order,
    is_content_word,
    load_stopwords,
    oracle_masks,
    stopword_list,
    synergy_analysis,
)
from headmask.core.decoding import greedy_decode
from headmask.core.errors import InputError
from headmask.core.model import Seq2SeqModel
from headmask.core.schema import (
    ANALYSIS_DECODE,
    ROUGE_METRICS,
    ROUGE_STATS,
    ContentSelectionEffect,
    DecodeParams,
    EncodedExample,
    FocusCategory,
    HeadMaskConfig,
    ModelConfig,
    RougeScore,
    RougeScores,
    Vocab,
)
from tests.fixtures import TINY, random_examples

DP = DecodeParams(beam_size=1, min_len=1, max_len=5, length_penalty=1.0)

# ids 4..7 are stopwords, 8..11 content words
VOCAB = Vocab(["the", "a", "of", "and", "w1", "w2", "w3", "w4"])


def flat_scores(value):
    score = RougeScore(value, value, value)
    return RougeScores(rouge1=score, rouge2=score, rougeL=score)


class TestStopwords(unittest.TestCase):
    """Shipped stopword list and the content-word test."""

    def test_list(self):
        words = stopword_list()
        self.assertEqual(len(words), 40)
        self.assertEqual(len(set(words)), 40)
        self.assertIn("the", load_stopwords())

    def test_content_words(self):
        self.assertTrue(is_content_word("cat"))
        self.assertTrue(is_content_word("Cat"))
        self.assertFalse(is_content_word("The"))
        self.assertFalse(is_content_word(","))
        self.assertFalse(is_content_word("<pad>"))
        self.assertTrue(is_content_word("the", frozenset()))


class TestContentSelectionEffect(unittest.TestCase):
    """Per-head oracle masking against uniform attention."""

    @classmethod
    def setUpClass(cls):
        cls.model = Seq2SeqModel.initialize(TINY, seed=31)
        cls.examples = random_examples(4, seed=12)
        cls.effect = content_selection_effect(cls.model, cls.examples, DP)

    def test_grid_shape_and_identity(self):
        self.assertEqual(len(self.effect.per_head), TINY.n_dec_layers)
        self.assertTrue(all(len(row) == TINY.n_heads for row in self.effect.per_head))
        for layer, row in enumerate(self.effect.effect_grid):
            for head, cell in enumerate(row):
                for m in ROUGE_METRICS:
                    for s in ROUGE_STATS:
                        expected = self.effect.per_head[layer][head].get(m, s) - self.effect.r_uni.get(m, s)
                        self.assertEqual(cell[m][s], expected)
        self.assertIsNotNone(self.effect.r_base)
        self.assertEqual(self.effect.fallbacks, 0)

    def test_cells_match_direct_evaluation(self):
        masks = oracle_masks(self.examples)
        scores, _ = evaluate_masking(
            self.model, self.examples, DP, HeadMaskConfig.for_heads(TINY, 1, [0]), masks
        )
        self.assertEqual(scores, self.effect.per_head[1][0])

    def test_round_trip_through_dict(self):
        again = ContentSelectionEffect.from_dict(self.effect.to_dict())
        self.assertEqual(again.per_head, self.effect.per_head)
        self.assertEqual(again.r_uni, self.effect.r_uni)

    def test_silent_cross_attention_has_no_effect(self):
        model = Seq2SeqModel.initialize(TINY, seed=31)
        for i in range(TINY.n_dec_layers):
            model.params[f"dec.{i}.cross.wo"][:] = 0.0
        effect = content_selection_effect(model, self.examples, DP)
        for row in effect.effect_grid:
            for cell in row:
                for m in ROUGE_METRICS:
                    self.assertEqual(cell[m]["f1"], 0.0)

    def test_unsalient_example_falls_back_with_warning(self):
        examples = list(self.examples) + [
            EncodedExample(id="z", source=(4, 5, 6), reference=(5,), labels=(0, 0, 0))
        ]
        with self.assertLogs("headmask.core.analysis", level="WARNING") as logs:
            effect = content_selection_effect(self.model, examples, DP)
        self.assertEqual(effect.fallbacks, 1)
        self.assertIn("no oracle-salient token", logs.output[0])

    def test_requires_labels(self):
        unlabeled = [EncodedExample(id="u", source=(4, 5), reference=(4,))]
        with self.assertRaises(InputError):
            content_selection_effect(self.model, unlabeled, DP)
        with self.assertRaises(InputError):
            evaluate_masking(self.model, [], DP, HeadMaskConfig.none(TINY))


class TestSynergy(unittest.TestCase):
    """Incremental masking curves."""

    def test_head_order(self):
        effect = ContentSelectionEffect(
            r_uni=flat_scores(0.2),
            per_head=[[flat_scores(0.3), flat_scores(0.5), flat_scores(0.3), flat_scores(0.1)]],
        )
        self.assertEqual(head_order(effect, 0), [1, 0, 2, 3])

    def test_curve_endpoints(self):
        model = Seq2SeqModel.initialize(TINY, seed=32)
        examples = random_examples(3, seed=13)
        effect = content_selection_effect(model, examples, DP)
        report = synergy_analysis(model, examples, effect, DP)
        self.assertEqual(len(report.layers), TINY.n_dec_layers)
        for layer in report.layers:
            first, last = layer.curve[0], layer.curve[-1]
            self.assertEqual(first.scores, effect.per_head[layer.layer][layer.order[0]])
            self.assertEqual([p.k for p in layer.curve], list(range(1, TINY.n_heads + 1)))
            self.assertEqual(sorted(last.heads), list(range(TINY.n_heads)))
            self.assertEqual(last.scores, layer.joint_all)
            joint, _ = evaluate_masking(
                model,
                examples,
                DP,
                HeadMaskConfig.for_heads(TINY, layer.layer, range(TINY.n_heads)),
                oracle_masks(examples),
            )
            self.assertEqual(joint, layer.joint_all)
            expected = sum(effect.effect(layer.layer, h) for h in range(TINY.n_heads))
            self.assertAlmostEqual(layer.sum_of_individuals["rouge1"]["f1"], expected, places=12)
            for point in layer.curve:
                self.assertAlmostEqual(
                    point.improvement_f1, point.scores.rouge1.f1 - effect.r_uni.rouge1.f1, places=12
                )

    def test_single_head_model(self):
        cfg = ModelConfig(
            vocab_size=12, d_model=8, n_heads=1, n_enc_layers=1, n_dec_layers=1, d_ff=16, max_positions=32
        )
        model = Seq2SeqModel.initialize(cfg, seed=2)
        examples = random_examples(3, seed=14, cfg=cfg)
        effect = content_selection_effect(model, examples, DP)
        report = synergy_analysis(model, examples, effect, DP)
        (layer,) = report.layers
        self.assertEqual(len(layer.curve), 1)
        self.assertEqual(layer.curve[0].scores, effect.per_head[0][0])
        self.assertEqual(layer.curve[0].non_positive_head, effect.effect(0, 0) <= 0.0)

    def test_layer_mismatch(self):
        model = Seq2SeqModel.initialize(TINY, seed=1)
        effect = ContentSelectionEffect(r_uni=flat_scores(0.1), per_head=[[flat_scores(0.1)] * 2])
        with self.assertRaises(InputError):
            synergy_analysis(model, random_examples(1), effect, DP)


class TestAttentionFocus(unittest.TestCase):
    """Attendee category tallies."""

    def setUp(self):
        self.model = Seq2SeqModel.initialize(TINY, seed=33)

    def test_one_token_source(self):
        examples = [EncodedExample(id="one", source=(8,), reference=(8,))]
        tally = attention_focus(self.model, examples, VOCAB, DP)
        for layer in range(TINY.n_dec_layers):
            for head in range(TINY.n_heads):
                total = int(tally.totals[layer, head])
                self.assertGreater(total, 0)
                self.assertEqual(tally.count(layer, head, FocusCategory.FIRST), total)
                self.assertEqual(tally.count(layer, head, FocusCategory.LAST), total)
                salient = tally.count(layer, head, FocusCategory.COPY_SALIENT) + tally.count(
                    layer, head, FocusCategory.NONCOPY_SALIENT
                )
                self.assertEqual(salient, total)

    def test_stopword_source_has_no_content(self):
        examples = [EncodedExample(id="stop", source=(4, 5, 6, 7), reference=(5,))]
        tally = attention_focus(self.model, examples, VOCAB, DP)
        for category in (FocusCategory.COPY_CONTENT, FocusCategory.NONCOPY_CONTENT):
            for layer in range(TINY.n_dec_layers):
                for head in range(TINY.n_heads):
                    self.assertEqual(tally.count(layer, head, category), 0)

    def test_totals_count_generated_tokens(self):
        examples = random_examples(3, seed=15)
        tally = attention_focus(self.model, examples, VOCAB, DP, threads=2)
        expected = sum(len(greedy_decode(self.model, ex.source, DP).content) for ex in examples)
        np.testing.assert_array_equal(tally.totals, np.full((TINY.n_dec_layers, TINY.n_heads), expected))
        self.assertTrue(np.all(tally.counts <= tally.totals[:, :, np.newaxis]))
        for row in tally.percentages():
            for cell in row:
                self.assertTrue(all(0.0 <= v <= 100.0 for v in cell.values()))

    def test_analysis_defaults_are_greedy(self):
        self.assertEqual(ANALYSIS_DECODE.beam_size, 1)


if __name__ == "__main__":
    unittest.main()
