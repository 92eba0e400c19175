"""On-disk formats: model JSON documents and JSON Lines corpora.

Every document carries ``format_version``; floats are written with Python's
shortest round-trip repr, so save/load reproduces parameters bit for bit.
"""

import json
import os

import numpy as np

from . import synth
from .frontal import FrontalPriorModel
from .pose import PosePriorModel

FORMAT_VERSION = 1


class SchemaError(ValueError):
    """A file does not match the expected schema or version."""


def dumps(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def model_to_json(model):
    if isinstance(model, PosePriorModel):
        kind = "pose"
    elif isinstance(model, FrontalPriorModel):
        kind = "frontal"
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return {"format_version": FORMAT_VERSION, "kind": kind, "model": model.to_json()}


def model_from_json(doc):
    if not isinstance(doc, dict):
        raise SchemaError("model document must be a JSON object")
    version = doc.get("format_version")
    if version is None:
        raise SchemaError("field 'format_version' is missing")
    if not isinstance(version, int) or version > FORMAT_VERSION:
        raise SchemaError(f"field 'format_version' = {version!r} is newer than supported ({FORMAT_VERSION})")
    kind = doc.get("kind")
    cls = {"frontal": FrontalPriorModel, "pose": PosePriorModel}.get(kind)
    if cls is None:
        raise SchemaError(f"field 'kind' must be 'frontal' or 'pose', got {kind!r}")
    if "model" not in doc:
        raise SchemaError("field 'model' is missing")
    try:
        return cls.from_json(doc["model"])
    except (ValueError, TypeError) as exc:
        raise SchemaError(str(exc)) from None


def save_model(model, path):
    _write_text(path, dumps(model_to_json(model)) + "\n")


def load_model(path):
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    return model_from_json(doc)


def _write_text(path, text):
    d = os.path.dirname(os.fspath(path))
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def write_jsonl(path, docs):
    _write_text(path, "".join(dumps(d) + "\n" for d in docs))


def read_jsonl(path):
    docs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                docs.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: not valid JSON ({exc.msg})") from None
    return docs


def write_shapes(path, records):
    write_jsonl(path, (r.to_json() for r in records))


def read_shapes(path):
    try:
        return [synth.ShapeRecord.from_json(d) for d in read_jsonl(path)]
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"{path}: {_describe(exc)}") from None


def write_pairs(path, pairs):
    write_jsonl(path, (p.to_json() for p in pairs))


def read_pairs(path):
    try:
        return [synth.PairRecord.from_json(d) for d in read_jsonl(path)]
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"{path}: {_describe(exc)}") from None


def write_sequences(path, sequences):
    write_jsonl(path, (doc for s in sequences for doc in s.to_json_lines()))


def read_sequences(path):
    try:
        return synth.sequences_from_json_lines(read_jsonl(path))
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"{path}: {_describe(exc)}") from None


def write_template(path, template=synth.TEMPLATE):
    _write_text(path, dumps(template.to_json()) + "\n")


def _describe(exc):
    if isinstance(exc, KeyError):
        return f"field {exc.args[0]!r} is missing"
    return str(exc)


def shapes_array(records):
    return np.array([r.coords for r in records]).reshape(-1, synth.DIM)
