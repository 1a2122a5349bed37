"""Model JSON files, GloVe-style embedding tables and JSONL datasets."""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import torch

from .cells import GATES, RNNModel, param_names, param_shape
from .domains import DTYPE

FORMAT_VERSION = 1
OOV_RANGE = 0.1


class FormatError(ValueError):
    """Malformed input file; the message names the location."""


# ---------------------------------------------------------------------------
# models


def _encode(t: torch.Tensor) -> dict:
    arr = np.ascontiguousarray(t.detach().cpu().numpy(), dtype="<f8")
    return {"shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def _decode(name: str, entry, where: str) -> torch.Tensor:
    if not isinstance(entry, dict) or "shape" not in entry or "data" not in entry:
        raise FormatError(f"{where}: weight {name!r} needs 'shape' and 'data'")
    shape = entry["shape"]
    if not isinstance(shape, list) or not all(isinstance(s, int) and s >= 0 for s in shape):
        raise FormatError(f"{where}: weight {name!r} has a bad shape {shape!r}")
    try:
        raw = base64.b64decode(entry["data"], validate=True)
    except (ValueError, TypeError) as exc:
        raise FormatError(f"{where}: weight {name!r} data is not base64 ({exc})") from None
    count = int(np.prod(shape)) if shape else 1
    if len(raw) != 8 * count:
        raise FormatError(f"{where}: weight {name!r} holds {len(raw) // 8} values, shape {shape} needs {count}")
    arr = np.frombuffer(raw, dtype="<f8").reshape(shape)
    return torch.from_numpy(arr.astype(np.float64, copy=True))


def model_to_dict(model: RNNModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "input_size": model.input_size,
        "hidden_size": model.hidden_size,
        "classes": model.classes,
        "weights": {name: _encode(p) for name, p in model.named_parameters()},
    }


def model_to_json(model: RNNModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, indent=1) + "\n"


def model_from_dict(doc: dict, where: str = "model") -> RNNModel:
    if not isinstance(doc, dict):
        raise FormatError(f"{where}: expected a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"{where}: unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    for key in ("kind", "input_size", "hidden_size", "classes", "weights"):
        if key not in doc:
            raise FormatError(f"{where}: missing field {key!r}")
    kind = doc["kind"]
    if kind not in GATES:
        raise FormatError(f"{where}: unknown kind {kind!r}")
    d, H, C = doc["input_size"], doc["hidden_size"], doc["classes"]
    if not all(isinstance(v, int) and v > 0 for v in (d, H, C)):
        raise FormatError(f"{where}: sizes must be positive integers")
    weights = doc["weights"]
    if not isinstance(weights, dict):
        raise FormatError(f"{where}: 'weights' must be an object")
    expected = {n: param_shape(n, d, H) for n in param_names(kind)}
    expected["W_o"], expected["b_o"] = (C, H), (C,)
    missing = [n for n in expected if n not in weights]
    if missing:
        raise FormatError(f"{where}: missing weights {missing}")
    extra = sorted(set(weights) - set(expected))
    if extra:
        raise FormatError(f"{where}: unexpected weights {extra}")
    tensors = {}
    for name, shape in expected.items():
        t = _decode(name, weights[name], where)
        if tuple(t.shape) != shape:
            raise FormatError(f"{where}: weight {name!r} has shape {list(t.shape)}, expected {list(shape)}")
        tensors[name] = t
    return RNNModel.from_dict(kind, d, H, tensors)


def save_model(model: RNNModel, path) -> None:
    Path(path).write_text(model_to_json(model))


def load_model(path) -> RNNModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from None
    return model_from_dict(doc, str(path))


# ---------------------------------------------------------------------------
# embeddings


@dataclass
class EmbeddingTable:
    vectors: Dict[str, np.ndarray]
    dim: int
    mean: np.ndarray
    std: np.ndarray
    seed: int = 0
    _oov: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def oov_vector(self, token: str) -> np.ndarray:
        """Uniform in [-0.1, 0.1]; depends only on (seed, token)."""
        if token not in self._oov:
            digest = hashlib.sha256(f"{self.seed}:{token}".encode()).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            self._oov[token] = rng.uniform(-OOV_RANGE, OOV_RANGE, self.dim)
        return self._oov[token]

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def __getitem__(self, token: str) -> np.ndarray:
        v = self.vectors.get(token)
        return self.oov_vector(token) if v is None else v

    def embed(self, tokens: Sequence[str]) -> torch.Tensor:
        if len(tokens) == 0:
            raise ValueError("cannot embed an empty token list")
        return torch.from_numpy(np.stack([self[t] for t in tokens])).to(DTYPE)


def standardize(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-column z-score; zero-variance columns are only centered."""
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)
    safe = np.where(std > 0, std, 1.0)
    return (matrix - mean) / safe, mean, std


def parse_embeddings(lines, seed: int = 0, normalize: bool = True, source: str = "<embeddings>") -> EmbeddingTable:
    tokens: List[str] = []
    rows: List[List[float]] = []
    seen = set()
    dim = None
    for lineno, line in enumerate(lines, 1):
        parts = line.rstrip("\n").split(" ")
        parts = [p for p in parts if p != ""]
        if not parts:
            continue
        token, values = parts[0], parts[1:]
        if dim is None:
            if not values:
                raise FormatError(f"{source}:{lineno}: token {token!r} has no vector")
            dim = len(values)
        elif len(values) != dim:
            raise FormatError(f"{source}:{lineno}: expected {dim} values, found {len(values)}")
        try:
            rows.append([float(v) for v in values])
        except ValueError as exc:
            raise FormatError(f"{source}:{lineno}: {exc}") from None
        if not all(np.isfinite(rows[-1])):
            raise FormatError(f"{source}:{lineno}: non-finite value for token {token!r}")
        if token in seen:
            raise FormatError(f"{source}:{lineno}: duplicate token {token!r}")
        seen.add(token)
        tokens.append(token)
    if dim is None:
        raise FormatError(f"{source}: no embeddings found")
    matrix = np.asarray(rows, dtype=np.float64)
    if normalize:
        matrix, mean, std = standardize(matrix)
    else:
        mean, std = np.zeros(dim), np.ones(dim)
    return EmbeddingTable(dict(zip(tokens, matrix)), dim, mean, std, seed)


def load_embeddings(path, seed: int = 0, normalize: bool = True) -> EmbeddingTable:
    with open(path, encoding="utf-8") as fh:
        return parse_embeddings(fh, seed, normalize, str(path))


def write_embeddings(vectors: Dict[str, np.ndarray], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tok, v in vectors.items():
            fh.write(tok + " " + " ".join(repr(float(x)) for x in v) + "\n")


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class Record:
    tokens: Tuple[str, ...]
    label: int


def read_dataset(path, classes: int = None) -> List[Record]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{where}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or "tokens" not in obj or "label" not in obj:
                raise FormatError(f"{where}: record needs 'tokens' and 'label'")
            tokens, label = obj["tokens"], obj["label"]
            if not isinstance(tokens, list) or not tokens or not all(isinstance(t, str) for t in tokens):
                raise FormatError(f"{where}: 'tokens' must be a nonempty list of strings")
            if not isinstance(label, int) or isinstance(label, bool) or label < 0:
                raise FormatError(f"{where}: 'label' must be a non-negative integer")
            if classes is not None and label >= classes:
                raise FormatError(f"{where}: label {label} out of range for {classes} classes")
            records.append(Record(tuple(tokens), label))
    if not records:
        raise FormatError(f"{path}: dataset is empty")
    return records


def write_dataset(records: Sequence[Record], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"tokens": list(r.tokens), "label": r.label}, sort_keys=True) + "\n")


def embed_dataset(records: Sequence[Record], table: EmbeddingTable) -> List[Tuple[torch.Tensor, int]]:
    return [(table.embed(r.tokens), r.label) for r in records]
