"""Checkpoint directories: ``manifest.json`` plus a ``parameters.bin`` blob.

The blob is the concatenation of every parameter, sorted by name, as
little-endian float32. The manifest records each parameter's name, shape,
offset and length (in elements) together with the model config, the
vocabulary and the label set.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Union
import numpy as np
from pydantic import ValidationError
from .core.tensor import get_default_dtype
from .data.vocab import Vocabulary
from .errors import CheckpointError
from .model import FormNetModel, ModelConfig

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
BLOB = "parameters.bin"
BLOB_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab: Vocabulary
    parameters: Dict[str, np.ndarray]
    step: int = 0

    @property
    def labels(self) -> List[str]:
        return list(self.config.labels)


def snapshot(model: FormNetModel, vocab: Vocabulary, step: int = 0) -> Checkpoint:
    """Copy the current weights of ``model`` into a :class:`Checkpoint`."""
    params = {name: p.data.copy() for name, p in model.named_parameters()}
    return Checkpoint(model.config, vocab, params, step)


def save_checkpoint(checkpoint: Checkpoint, out_dir: Union[str, Path]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries: List[Dict[str, Any]] = []
    chunks: List[bytes] = []
    offset = 0
    for name in sorted(checkpoint.parameters):
        values = np.ascontiguousarray(checkpoint.parameters[name], dtype=BLOB_DTYPE)
        entries.append(
            {
                "name": name,
                "shape": list(values.shape),
                "offset": offset,
                "length": values.size,
            }
        )
        chunks.append(values.tobytes())
        offset += values.size
    manifest = {
        "format_version": FORMAT_VERSION,
        "step": checkpoint.step,
        "model_config": checkpoint.config.model_dump(mode="json"),
        "labels": checkpoint.labels,
        "vocabulary": checkpoint.vocab.to_dict(),
        "parameters": entries,
    }
    (out / BLOB).write_bytes(b"".join(chunks))
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    logger.info(f"Wrote checkpoint {out} step={checkpoint.step} tensors={len(entries)}")
    return out


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    root = Path(path)
    try:
        manifest = json.loads((root / MANIFEST).read_text(encoding="utf-8"))
        blob = np.frombuffer((root / BLOB).read_bytes(), dtype=BLOB_DTYPE)
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read checkpoint {root}: {e}") from e

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{root}: unsupported format version {version}")
    try:
        config = ModelConfig.model_validate(manifest["model_config"])
        vocab = Vocabulary.from_dict(manifest["vocabulary"])
        entries = manifest["parameters"]
    except (KeyError, ValidationError) as e:
        raise CheckpointError(f"{root}: malformed manifest: {e}") from e
    if list(manifest.get("labels", [])) != list(config.labels):
        raise CheckpointError(f"{root}: label list disagrees with the model config")

    parameters: Dict[str, np.ndarray] = {}
    for entry in entries:
        start, length = int(entry["offset"]), int(entry["length"])
        shape = tuple(entry["shape"])
        if start + length > blob.size or int(np.prod(shape, dtype=np.int64)) != length:
            raise CheckpointError(f"{root}: tensor {entry['name']} is out of range")
        parameters[entry["name"]] = blob[start : start + length].reshape(shape).copy()
    logger.info(f"Loaded checkpoint {root} step={manifest.get('step', 0)}")
    return Checkpoint(config, vocab, parameters, int(manifest.get("step", 0)))


def load_parameters(model: FormNetModel, checkpoint: Checkpoint) -> None:
    """Copy checkpoint weights into ``model``; names and shapes must match."""
    params = model.parameters()
    missing = sorted(set(params) - set(checkpoint.parameters))
    unexpected = sorted(set(checkpoint.parameters) - set(params))
    if missing or unexpected:
        raise CheckpointError(
            f"parameter mismatch: missing={missing} unexpected={unexpected}"
        )
    dtype = get_default_dtype()
    for name, param in params.items():
        values = checkpoint.parameters[name]
        if values.shape != param.shape:
            raise CheckpointError(
                f"parameter {name}: checkpoint shape {values.shape} "
                f"vs model {param.shape}"
            )
        param.data = values.astype(dtype)
        param.zero_grad()


def build_model(checkpoint: Checkpoint) -> FormNetModel:
    model = FormNetModel(checkpoint.config)
    load_parameters(model, checkpoint)
    return model
