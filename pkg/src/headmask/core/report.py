# src/headmask/core/report.py

"""
Report Writer

JSON reports with a provenance block, and CSV flattening of the effect grid.
Reports carry no timestamps or process ids, so identical inputs give
byte-identical files.
"""

import csv
import hashlib
import json
import platform
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any, Optional, Union

from ..version import __version__
from .schema import ROUGE_METRICS, ROUGE_STATS, ContentSelectionEffect, EncodedExample

REPORT_FORMAT = "headmask-report"


def detect_runtime() -> str:
    """Language version and platform, e.g. "python 3.11.4 (linux-x86_64)"."""
    version = f"{sys.version_info.major}.{sys.version_info.minor}.{sys.version_info.micro}"
    system = platform.system().lower()
    machine = platform.machine().lower()

    if system == "darwin":
        platform_name = f"darwin-{machine}"
    elif system == "windows":
        platform_name = "win64" if machine == "amd64" else "win32"
    else:
        platform_name = f"{system}-{machine}"

    return f"python {version} ({platform_name})"


def canonical_hash(payload: Any) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def file_hash(path: Union[str, Path]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def examples_hash(examples: Sequence[EncodedExample]) -> str:
    """Hash of an encoded split: ids, token ids and labels in order."""
    return canonical_hash(
        [
            {
                "id": ex.id,
                "source": list(ex.source),
                "reference": list(ex.reference),
                "labels": None if ex.labels is None else [int(b) for b in ex.labels],
            }
            for ex in examples
        ]
    )


def provenance(
    config_hash: str,
    seed: int,
    model_hash: Optional[str] = None,
    inputs: Optional[dict[str, str]] = None,
) -> dict[str, Any]:
    return {
        "tool": "headmask",
        "version": __version__,
        "runtime": detect_runtime(),
        "config_hash": config_hash,
        "seed": seed,
        "model_hash": model_hash,
        "inputs": dict(sorted((inputs or {}).items())),
    }


def write_report(
    path: Union[str, Path], report: str, body: dict[str, Any], prov: dict[str, Any]
) -> Path:
    """Write body fields at the top level next to "report" and "provenance"."""
    document = {"format": REPORT_FORMAT, "report": report, "provenance": prov, **body}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def read_report(path: Union[str, Path]) -> dict[str, Any]:
    document: dict[str, Any] = json.loads(Path(path).read_text(encoding="utf-8"))
    return document


def write_effect_csv(path: Union[str, Path], effect: ContentSelectionEffect) -> Path:
    """One row per (layer, head, metric, stat) for heat-map plotting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["layer", "head", "metric", "stat", "r_ora", "r_uni", "effect"])
        for layer, row in enumerate(effect.per_head):
            for head, cell in enumerate(row):
                for metric in ROUGE_METRICS:
                    for stat in ROUGE_STATS:
                        r_ora = cell.get(metric, stat)
                        r_uni = effect.r_uni.get(metric, stat)
                        writer.writerow(
                            [layer, head, metric, stat, repr(r_ora), repr(r_uni), repr(r_ora - r_uni)]
                        )
    return path
