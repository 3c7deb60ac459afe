"""Versioned JSON checkpoints for trained model parameters.

Document layout::

    {"format": "mi-guard-checkpoint", "version": 1,
     "architecture": {"input_dim": ..., "widths": [...], "activation": "relu"},
     "parameters": [{"name": "W0", "shape": [i, o], "values": [...]}, ...]}

Floats are written with ``repr`` precision, so loading gives back the exact
parameters.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from mi_guard.errors import InvalidParameterError
from mi_guard.models.mlp import ModelParams
from mi_guard.schemas.training import MlpArchitecture

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "mi-guard-checkpoint"
CHECKPOINT_VERSION = 1


def checkpoint_document(params: ModelParams) -> dict:
    parameters = []
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        parameters.append({"name": f"W{i}", "shape": list(w.shape), "values": w.ravel().tolist()})
        parameters.append({"name": f"b{i}", "shape": list(b.shape), "values": b.tolist()})
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "architecture": params.architecture.model_dump(mode="json"),
        "parameters": parameters,
    }


def save_checkpoint(params: ModelParams, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(checkpoint_document(params), sort_keys=True) + "\n", encoding="utf-8")
    logger.info("Checkpoint written: %s (%d parameters)", path, params.architecture.num_parameters)
    return path


def params_from_document(doc: dict) -> ModelParams:
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise InvalidParameterError(f"not a checkpoint document (format={doc.get('format')!r})")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise InvalidParameterError(f"unsupported checkpoint version {doc.get('version')!r}")
    try:
        architecture = MlpArchitecture.model_validate(doc["architecture"])
    except (KeyError, ValidationError) as exc:
        raise InvalidParameterError(f"invalid checkpoint architecture: {exc}") from exc

    arrays = []
    for entry in doc.get("parameters", []):
        values = np.asarray(entry["values"], dtype=np.float64)
        arrays.append(values.reshape(tuple(entry["shape"])))
    if len(arrays) != 2 * len(architecture.layer_shapes):
        raise InvalidParameterError(
            f"checkpoint holds {len(arrays)} arrays, architecture needs {2 * len(architecture.layer_shapes)}"
        )
    return ModelParams(architecture, tuple(arrays[0::2]), tuple(arrays[1::2]))


def load_checkpoint(path: str | Path) -> ModelParams:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidParameterError(f"{path}: not valid JSON ({exc})") from exc
    return params_from_document(doc)
