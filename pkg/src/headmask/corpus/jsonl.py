# src/headmask/corpus/jsonl.py

"""
JSONL Corpus Reader

One example per line:

    {"id": str, "source": [str], "reference": [str], "labels": [0/1], "split": str}

labels and split are optional (split defaults to train). Malformed lines are
reported with their line numbers; in strict mode any bad line fails the read.
"""

import json
import logging
from pathlib import Path
from typing import Union

from ..core.errors import IngestionError
from ..core.schema import Corpus, Example
from .base import BaseCorpusReader, build_corpus

logger = logging.getLogger(__name__)

REQUIRED_FIELDS = ("id", "source", "reference")
KNOWN_FIELDS = (*REQUIRED_FIELDS, "labels", "split")


class JsonlCorpusReader(BaseCorpusReader):
    """Reader for line-delimited JSON corpora."""

    def __init__(self, strict: bool = True) -> None:
        super().__init__()
        self.strict = strict
        self.lines_read = 0
        self.lines_valid = 0

    def read(self, content: str) -> Corpus:
        self.line_errors = []
        examples: list[Example] = []
        ids: set[str] = set()
        self.lines_read = 0

        for line_num, line in enumerate(content.splitlines(), start=1):
            if not line.strip():
                continue
            self.lines_read += 1
            try:
                example = self._parse_line(line)
                if example.id in ids:
                    raise ValueError(f"duplicate id '{example.id}'")
            except ValueError as e:
                self.line_errors.append((line_num, str(e)))
                continue
            ids.add(example.id)
            examples.append(example)

        self.lines_valid = len(examples)
        if self.lines_read == 0:
            raise IngestionError("corpus file is empty", stage="ingest")
        if self.line_errors:
            if self.strict or not examples:
                raise IngestionError(
                    f"{len(self.line_errors)} of {self.lines_read} lines are invalid",
                    self.line_errors,
                    stage="ingest",
                )
            logger.warning(
                "Skipped %d invalid lines of %d (first: line %d: %s)",
                len(self.line_errors),
                self.lines_read,
                *self.line_errors[0],
            )
        return build_corpus(examples)

    def _parse_line(self, line: str) -> Example:
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValueError(f"invalid JSON ({e.msg})") from None
        if not isinstance(record, dict):
            raise ValueError("expected a JSON object")
        missing = [f for f in REQUIRED_FIELDS if f not in record]
        if missing:
            raise ValueError(f"missing field(s): {', '.join(missing)}")
        unknown = sorted(set(record) - set(KNOWN_FIELDS))
        if unknown:
            raise ValueError(f"unknown field(s): {', '.join(unknown)}")
        if not isinstance(record["id"], str) or not record["id"]:
            raise ValueError("'id' must be a nonempty string")

        source = self._tokens(record["source"], "source")
        return Example(
            id=record["id"],
            source=source,
            reference=self._tokens(record["reference"], "reference"),
            labels=self._labels(record.get("labels"), len(source)),
            split=self._split(record.get("split")),
        )


def ingest(path: Union[str, Path], strict: bool = True) -> Corpus:
    """Read and validate a JSONL corpus file."""
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"corpus file not found: {path}", stage="ingest")
    reader = JsonlCorpusReader(strict=strict)
    corpus = reader.read(path.read_text(encoding="utf-8"))
    logger.info(
        "Ingested %d examples from %s (%d rejected)",
        reader.lines_valid,
        path,
        len(reader.line_errors),
    )
    return corpus


def write_jsonl(corpus: Corpus, path: Union[str, Path]) -> None:
    """Write one JSON object per example, in corpus order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for ex in corpus.examples:
            f.write(json.dumps(ex.to_dict(), sort_keys=True) + "\n")
