# src/headmask/core/checkpoint.py

"""
Checkpoint Container

Parameters are stored as a versioned JSON document. Floats are written with
Python's shortest round-trip repr, so a load reproduces every bit and the same
parameters always serialize to the same bytes.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Union

import numpy as np

from .errors import ConfigError, InputError
from .model import Params, Seq2SeqModel, check_params
from .schema import ModelConfig

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "headmask-checkpoint"
CHECKPOINT_VERSION = 1

KIND_SUMMARIZER = "summarizer"
KIND_TAGGER = "tagger"


def params_to_dict(params: Params) -> dict[str, Any]:
    return {
        name: {"shape": list(params[name].shape), "data": params[name].ravel().tolist()}
        for name in sorted(params)
    }


def params_from_dict(data: dict[str, Any]) -> Params:
    params: Params = {}
    for name, entry in data.items():
        try:
            shape = tuple(int(n) for n in entry["shape"])
            params[name] = np.asarray(entry["data"], dtype=np.float64).reshape(shape)
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"malformed checkpoint entry '{name}': {e}") from e
    return params


def params_hash(params: Params) -> str:
    """SHA-256 over names, shapes and raw float64 bytes, in name order."""
    digest = hashlib.sha256()
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype=np.float64)
        digest.update(name.encode("utf-8"))
        digest.update(repr(arr.shape).encode("utf-8"))
        digest.update(arr.tobytes())
    return digest.hexdigest()


def save_checkpoint(
    path: Union[str, Path], kind: str, config: dict[str, Any], params: Params
) -> str:
    """Write a checkpoint and return its parameter hash."""
    document = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "config": config,
        "params_hash": params_hash(params),
        "params": params_to_dict(params),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, sort_keys=True), encoding="utf-8")
    logger.debug("Wrote %s checkpoint to %s", kind, path)
    return str(document["params_hash"])


def load_checkpoint(path: Union[str, Path], kind: str) -> tuple[dict[str, Any], Params]:
    """Read a checkpoint of the given kind; returns (config, params)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InputError(f"checkpoint {path} is not valid JSON: {e}") from e

    if document.get("format") != CHECKPOINT_FORMAT:
        raise InputError(f"{path} is not a headmask checkpoint")
    if document.get("version") != CHECKPOINT_VERSION:
        raise InputError(
            f"unsupported checkpoint version {document.get('version')} in {path}"
        )
    if document.get("kind") != kind:
        raise InputError(f"{path} holds a {document.get('kind')} checkpoint, not {kind}")
    return dict(document.get("config", {})), params_from_dict(document["params"])


def save_model(path: Union[str, Path], model: Seq2SeqModel) -> str:
    return save_checkpoint(
        path, KIND_SUMMARIZER, {"model": model.cfg.to_dict()}, model.params
    )


def load_model(path: Union[str, Path]) -> Seq2SeqModel:
    config, params = load_checkpoint(path, KIND_SUMMARIZER)
    cfg = ModelConfig.from_dict(config.get("model", {}))
    check_params(cfg, params)
    return Seq2SeqModel(cfg, params)
