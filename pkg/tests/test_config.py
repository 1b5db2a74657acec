#!/usr/bin/env python3
"""
Test suite for YAML configuration loading and CLI overrides
"""

import sys
import tempfile
import unittest
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from headmask.core.config import (
    STAGES,
    PipelineConfig,
    apply_overrides,
    config_from_dict,
    load_config,
)
from headmask.core.errors import ConfigError

DEMO = Path(__file__).parent.parent / "configs" / "demo.yaml"


class TestDefaults(unittest.TestCase):
    """Built-in defaults."""

    def test_no_path_gives_defaults(self):
        cfg = load_config()
        self.assertEqual(cfg, config_from_dict({}))
        self.assertEqual(cfg.stages, STAGES)
        self.assertIsNone(cfg.corpus)
        self.assertEqual(cfg.threads, 1)

    def test_tagger_has_its_own_learning_rate(self):
        cfg = load_config()
        self.assertEqual(cfg.tagger.learning_rate, 5e-4)
        self.assertEqual(cfg.train.learning_rate, 3e-4)
        self.assertTrue(cfg.tagger.freeze_encoder)

    def test_analysis_decodes_greedily(self):
        self.assertEqual(load_config().analysis.decode.beam_size, 1)

    def test_top_level_seed_and_threads_reach_trainers(self):
        cfg = config_from_dict({"seed": 7, "threads": 3})
        self.assertEqual(cfg.summarizer_train.seed, 7)
        self.assertEqual(cfg.tagger_train.seed, 7)
        self.assertEqual(cfg.summarizer_train.workers, 3)


class TestLoadConfig(unittest.TestCase):
    """YAML files."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, text):
        path = self.dir / "config.yaml"
        path.write_text(text, encoding="utf-8")
        return path

    def test_demo_config_loads(self):
        cfg = load_config(DEMO)
        self.assertEqual(cfg.model.n_heads, 4)
        self.assertEqual(cfg.decode.beam_size, 5)
        self.assertEqual(cfg.decode.length_penalty, 2.0)
        self.assertEqual((cfg.decode.min_len, cfg.decode.max_len), (8, 64))
        self.assertEqual(cfg.summarizer_train.learning_rate, 3e-4)
        self.assertEqual(cfg.tagger_train.learning_rate, 5e-4)
        self.assertEqual(cfg.selection.block, 4)
        self.assertEqual(
            (cfg.data.n_train, cfg.data.n_validation, cfg.data.n_analysis, cfg.data.n_test),
            (2000, 200, 200, 200),
        )
        self.assertEqual(cfg.data.source_len, (30, 60))
        self.assertEqual(cfg.data.span_len, (3, 6))
        self.assertEqual(cfg.data.vocab_size, 200)
        self.assertEqual(
            (cfg.model.n_enc_layers, cfg.model.n_dec_layers, cfg.model.d_model), (4, 4, 64)
        )
        self.assertEqual(cfg.sweep.fractions, (0.25, 0.5, 1.0))

    def test_partial_sections_merge_with_defaults(self):
        cfg = load_config(self.write("tagger:\n  max_epochs: 3\nmodel:\n  d_model: 16\n"))
        self.assertEqual(cfg.tagger.max_epochs, 3)
        self.assertEqual(cfg.tagger.learning_rate, 5e-4)
        self.assertEqual(cfg.model.d_model, 16)
        self.assertEqual(cfg.model.n_heads, PipelineConfig().model.n_heads)

    def test_corpus_path_lives_in_data_section(self):
        cfg = load_config(self.write("data:\n  corpus: my.jsonl\n"))
        self.assertEqual(cfg.corpus, "my.jsonl")
        self.assertEqual(cfg.to_dict()["data"]["corpus"], "my.jsonl")

    def test_empty_file_gives_defaults(self):
        self.assertEqual(load_config(self.write("")), load_config())

    def test_errors(self):
        bad = [
            "unknown_section: 1\n",
            "model:\n  width: 3\n",
            "- a\n- b\n",
            "model: [1, 2]\n",
            "stages: [train, deploy]\n",
            "stages: train\n",
            "threads: 0\n",
            "model:\n  d_model: 10\n  n_heads: 4\n",
            "decode:\n  min_len: 5\n  max_len: 2\n",
            "train:\n  learning_rate: 0\n",
            "sweep:\n  fractions: [0.0, 1.0]\n",
            "selection:\n  block: 0\n",
            "analysis:\n  size: 0\n",
            "model: {d_model: [\n",
        ]
        for text in bad:
            with self.assertRaises(ConfigError, msg=text):
                load_config(self.write(text))

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config(self.dir / "missing.yaml")


class TestOverridesAndHash(unittest.TestCase):
    """Flag precedence and the provenance hash."""

    def test_flags_win(self):
        cfg = apply_overrides(load_config(DEMO), seed=5, threads=4, out_dir="elsewhere")
        self.assertEqual((cfg.seed, cfg.threads, cfg.out_dir), (5, 4, "elsewhere"))

    def test_unset_flags_keep_file_values(self):
        base = load_config(DEMO)
        self.assertEqual(apply_overrides(base), base)

    def test_invalid_override(self):
        with self.assertRaises(ConfigError):
            apply_overrides(load_config(), threads=0)

    def test_hash_ignores_threads_and_out_dir(self):
        base = load_config(DEMO)
        moved = apply_overrides(base, threads=8, out_dir="/tmp/other")
        self.assertEqual(base.hash(), moved.hash())
        self.assertNotEqual(base.hash(), apply_overrides(base, seed=99).hash())
        self.assertEqual(len(base.hash()), 64)


if __name__ == "__main__":
    unittest.main()
