#!/usr/bin/env python3
"""
Test suite for checkpoints, JSON reports and the effect CSV
"""

import csv
import json
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from headmask.core.checkpoint import (
    KIND_SUMMARIZER,
    KIND_TAGGER,
    load_checkpoint,
    load_model,
    params_hash,
    save_checkpoint,
    save_model,
)
from headmask.core.errors import ConfigError, InputError
from headmask.core.model import Seq2SeqModel
from headmask.core.report import (
    detect_runtime,
    examples_hash,
    provenance,
    read_report,
    write_effect_csv,
    write_report,
)
from headmask.core.schema import ContentSelectionEffect, RougeScore, RougeScores
from tests.fixtures import TINY, random_examples


class TestCheckpoint(unittest.TestCase):
    """Parameter files."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.model = Seq2SeqModel.initialize(TINY, seed=5)

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip_is_exact(self):
        path = self.dir / "summarizer.json"
        digest = save_model(path, self.model)
        again = load_model(path)
        self.assertEqual(again.cfg, TINY)
        self.assertEqual(params_hash(again.params), digest)
        for name in self.model.params:
            self.assertEqual(again.params[name].tobytes(), self.model.params[name].tobytes())

    def test_same_params_same_bytes(self):
        a, b = self.dir / "a.json", self.dir / "b.json"
        save_model(a, self.model)
        save_model(b, Seq2SeqModel.initialize(TINY, seed=5))
        self.assertEqual(a.read_bytes(), b.read_bytes())

    def test_hash_sees_every_value(self):
        before = params_hash(self.model.params)
        self.model.params["out.b"][0] += 1e-12
        self.assertNotEqual(params_hash(self.model.params), before)

    def test_kind_and_format_checks(self):
        path = self.dir / "summarizer.json"
        save_model(path, self.model)
        with self.assertRaises(InputError):
            load_checkpoint(path, KIND_TAGGER)
        with self.assertRaises(ConfigError):
            load_checkpoint(self.dir / "missing.json", KIND_SUMMARIZER)
        other = self.dir / "other.json"
        other.write_text(json.dumps({"format": "something-else"}), encoding="utf-8")
        with self.assertRaises(InputError):
            load_checkpoint(other, KIND_SUMMARIZER)
        broken = self.dir / "broken.json"
        broken.write_text("{", encoding="utf-8")
        with self.assertRaises(InputError):
            load_checkpoint(broken, KIND_SUMMARIZER)

    def test_config_is_returned(self):
        path = self.dir / "tagger.json"
        save_checkpoint(path, KIND_TAGGER, {"hidden_size": 3}, {"w": np.ones((2, 2))})
        config, params = load_checkpoint(path, KIND_TAGGER)
        self.assertEqual(config, {"hidden_size": 3})
        np.testing.assert_array_equal(params["w"], np.ones((2, 2)))


class TestReports(unittest.TestCase):
    """JSON reports and CSV output."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_runtime_string(self):
        self.assertRegex(detect_runtime(), r"^python \d+\.\d+\.\d+ \(\S+\)$")

    def test_body_fields_at_top_level(self):
        prov = provenance("c" * 64, 3, "m" * 64, {"b": "2", "a": "1"})
        path = write_report(self.dir / "sel.json", "head-selection", {"layer": 1, "heads": [0, 2]}, prov)
        data = read_report(path)
        self.assertEqual((data["layer"], data["heads"]), (1, [0, 2]))
        self.assertEqual(data["report"], "head-selection")
        self.assertEqual(list(data["provenance"]["inputs"]), ["a", "b"])
        self.assertEqual(data["provenance"]["seed"], 3)

    def test_identical_inputs_identical_bytes(self):
        prov = provenance("c" * 64, 0)
        a = write_report(self.dir / "a.json", "x", {"v": 0.1 + 0.2}, prov)
        b = write_report(self.dir / "b.json", "x", {"v": 0.1 + 0.2}, prov)
        self.assertEqual(a.read_bytes(), b.read_bytes())

    def test_examples_hash_tracks_content(self):
        examples = random_examples(3, seed=2)
        self.assertEqual(examples_hash(examples), examples_hash(random_examples(3, seed=2)))
        self.assertNotEqual(examples_hash(examples), examples_hash(examples[:2]))

    def test_effect_csv(self):
        uni = RougeScores(RougeScore(0.5, 0.5, 0.5), RougeScore(0.2, 0.2, 0.2), RougeScore(0.4, 0.4, 0.4))
        cell = RougeScores(RougeScore(0.6, 0.7, 0.65), RougeScore(0.2, 0.3, 0.25), RougeScore(0.5, 0.5, 0.5))
        effect = ContentSelectionEffect(r_uni=uni, per_head=[[cell, uni]])
        path = write_effect_csv(self.dir / "effect.csv", effect)
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        self.assertEqual(len(rows), 2 * 9)
        first = rows[0]
        self.assertEqual((first["layer"], first["head"], first["metric"], first["stat"]), ("0", "0", "rouge1", "precision"))
        self.assertEqual(float(first["effect"]), 0.6 - 0.5)
        self.assertTrue(all(float(r["effect"]) == 0.0 for r in rows if r["head"] == "1"))


if __name__ == "__main__":
    unittest.main()
