#!/usr/bin/env python3
"""
Test suite for greedy head selection
"""

import sys
import unittest
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from headmask.core.analysis import content_selection_effect, evaluate_masking, head_order
from headmask.core.errors import AnalysisError, InputError
from headmask.core.model import Seq2SeqModel
from headmask.core.saliency import SaliencyTagger
from headmask.core.schema import DecisionBoundary, DecodeParams, HeadSelectionResult
from headmask.core.selection import block_sizes, greedy_select_heads, system_masks
from tests.fixtures import TINY, random_examples

DP = DecodeParams(beam_size=1, min_len=1, max_len=5, length_penalty=1.0)


class TestBlockSizes(unittest.TestCase):
    """Prefix sizes evaluated per layer."""

    def test_sizes(self):
        self.assertEqual(block_sizes(16, 4), [4, 8, 12, 16])
        self.assertEqual(block_sizes(4, 4), [4])
        self.assertEqual(block_sizes(5, 2), [2, 4, 5])
        self.assertEqual(block_sizes(2, 4), [2])
        self.assertEqual(block_sizes(3, 1), [1, 2, 3])

    def test_block_must_be_positive(self):
        with self.assertRaises(InputError):
            block_sizes(4, 0)


class TestGreedySelectHeads(unittest.TestCase):
    """Per-layer prefix search under tagger masks."""

    @classmethod
    def setUpClass(cls):
        cls.model = Seq2SeqModel.initialize(TINY, seed=41)
        cls.tagger = SaliencyTagger.initialize(TINY, 4, seed=2, encoder_from=cls.model.params)
        cls.boundary = DecisionBoundary(0.1)
        cls.examples = random_examples(4, seed=16)
        cls.effect = content_selection_effect(cls.model, cls.examples, DP)
        cls.result = greedy_select_heads(
            cls.model, cls.tagger, cls.boundary, cls.examples, cls.effect, block=1, dp=DP
        )

    def test_trajectory_covers_every_prefix(self):
        trajectory = self.result.trajectory
        self.assertEqual(len(trajectory), TINY.n_dec_layers * TINY.n_heads)
        for entry in trajectory:
            order = head_order(self.effect, entry["layer"])
            self.assertEqual(entry["heads"], sorted(order[: entry["k"]]))

    def test_best_is_first_maximum(self):
        scores = [entry["score"] for entry in self.result.trajectory]
        self.assertEqual(self.result.score, max(scores))
        first = self.result.trajectory[scores.index(max(scores))]
        self.assertEqual((self.result.layer, self.result.heads), (first["layer"], first["heads"]))

    def test_score_matches_reevaluation(self):
        masks = system_masks(self.tagger, self.boundary, self.examples)
        scores, _ = evaluate_masking(
            self.model, self.examples, DP, self.result.mask_config(TINY), masks
        )
        self.assertEqual(scores.r1_plus_r2, self.result.score)

    def test_result_is_a_mask_file(self):
        data = self.result.to_dict()
        self.assertEqual(data["layer"], self.result.layer)
        self.assertEqual(data["heads"], sorted(self.result.heads))
        self.assertIsNotNone(data["baseline_score"])

    def test_whole_layer_block(self):
        result = greedy_select_heads(
            self.model, self.tagger, self.boundary, self.examples, self.effect, block=4, dp=DP
        )
        self.assertEqual(len(result.trajectory), TINY.n_dec_layers)
        self.assertTrue(all(entry["k"] == TINY.n_heads for entry in result.trajectory))

    def test_empty_analysis_set(self):
        with self.assertRaises(InputError):
            greedy_select_heads(self.model, self.tagger, self.boundary, [], self.effect, dp=DP)

    def test_empty_subset_rejected(self):
        with self.assertRaises(AnalysisError):
            HeadSelectionResult(layer=0, heads=[], score=0.0, trajectory=[])


if __name__ == "__main__":
    unittest.main()
