# src/headmask/corpus/__init__.py

# Corpus readers, writer and the synthetic generator

from .base import BaseCorpusReader, build_corpus
from .jsonl import JsonlCorpusReader, ingest, write_jsonl
from .synthetic import generate_corpus

__all__ = [
    "BaseCorpusReader",
    "JsonlCorpusReader",
    "build_corpus",
    "generate_corpus",
    "ingest",
    "write_jsonl",
]
