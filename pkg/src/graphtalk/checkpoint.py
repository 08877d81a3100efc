"""Versioned binary checkpoints.

Layout (all integers big-endian):

    bytes 0..5    magic  b"GTCK01"
    bytes 6..9    uint32 header length H
    bytes 10..10+H  UTF-8 JSON header, keys sorted
    remainder     concatenated parameter values, raw little-endian
                  float64, row-major, in the header's parameter order

The header carries the format version, the config snapshot, both
vocabularies, the ontology and the (name, shape) list of parameters.
Writing the same model twice yields bit-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import Ontology
from .errors import CheckpointError
from .model import DialogueModel
from .vocab import EntityVocabulary, SketchVocabulary

MAGIC = b"GTCK01"
FORMAT_VERSION = 1

__all__ = ["save_checkpoint", "load_checkpoint", "FORMAT_VERSION"]


def save_checkpoint(path: str | Path, model: DialogueModel, ontology: Ontology,
                    param_arrays: dict[str, np.ndarray] | None = None) -> None:
    """Write the model (or an explicit parameter snapshot) to ``path``."""
    arrays = param_arrays if param_arrays is not None else model.param_arrays()
    names = model.store.names()
    if set(names) != set(arrays):
        raise CheckpointError("parameter snapshot does not match the model")
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "vocab": list(model.vocab.words),
        "tags": sorted(model.vocab.tags),
        "entity_vocab": list(model.entity_vocab.tokens),
        "ontology": {t: sorted(vs) for t, vs in ontology.types.items()},
        "params": [{"name": n, "shape": list(arrays[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(len(blob).to_bytes(4, "big"))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[DialogueModel, Ontology]:
    """Rebuild a model (and its ontology) from a checkpoint file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}")
    if len(raw) < 10 or raw[:6] != MAGIC:
        raise CheckpointError(f"{path} is not a graphtalk checkpoint")
    hlen = int.from_bytes(raw[6:10], "big")
    try:
        header = json.loads(raw[10:10 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint header: {e}")
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {header.get('format_version')} "
            f"not supported (expected {FORMAT_VERSION})")

    config = RunConfig.from_dict(header["config"])
    vocab = SketchVocabulary(header["vocab"], set(header["tags"]))
    entity_vocab = EntityVocabulary(header["entity_vocab"])
    if entity_vocab.tokens != header["entity_vocab"]:
        raise CheckpointError("entity vocabulary in checkpoint is not canonical")
    types = {t: set(vs) for t, vs in header["ontology"].items()}
    value_to_type: dict[str, str] = {}
    for slot in sorted(types):
        for v in types[slot]:
            value_to_type.setdefault(v, slot)
    ontology = Ontology(types=types, value_to_type=value_to_type)

    model = DialogueModel(config, vocab, entity_vocab)

    offset = 10 + hlen
    arrays: dict[str, np.ndarray] = {}
    for meta in header["params"]:
        shape = tuple(int(s) for s in meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        chunk = raw[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"checkpoint truncated at parameter {meta['name']!r}")
        arrays[meta["name"]] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError("trailing bytes after parameter payload")
    try:
        model.load_param_arrays(arrays)
    except Exception as e:
        raise CheckpointError(f"checkpoint incompatible with rebuilt model: {e}")
    return model, ontology
