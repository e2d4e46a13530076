"""Self-describing checkpoint container.

Layout: a UTF-8 JSON header line (format version, backend kind, vocabulary,
config, arbitrary extra metadata) terminated by a newline, then a blank
line, then the model arrays. Each array is written as

    u64 name length | name bytes | u64 dtype length | dtype string |
    u64 ndim | u64 dims... | u64 payload bytes | little-endian payload

Loading a checkpoint reproduces next_distribution bit-exactly because the
arrays are the model's entire state.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict
from pathlib import Path
from typing import Any, Optional

import numpy as np

from ..errors import CheckpointError
from .neural import NeuralConfig, TinyNeuralLM
from .ngram import NgramConfig, NgramModel
from .vocab import Vocabulary

FORMAT_VERSION = 1
_MAGIC = "tabsynth-checkpoint"


def _write_array(fh, name: str, arr: np.ndarray) -> None:
    data = np.ascontiguousarray(arr)
    if data.dtype.byteorder == ">":
        data = data.astype(data.dtype.newbyteorder("<"))
    payload = data.tobytes()
    nb = name.encode("utf-8")
    dt = data.dtype.str.lstrip("<=|").encode("utf-8")
    fh.write(struct.pack("<Q", len(nb)))
    fh.write(nb)
    fh.write(struct.pack("<Q", len(dt)))
    fh.write(dt)
    fh.write(struct.pack("<Q", data.ndim))
    for dim in data.shape:
        fh.write(struct.pack("<Q", dim))
    fh.write(struct.pack("<Q", len(payload)))
    fh.write(payload)


def _read_exact(fh, n: int) -> bytes:
    out = fh.read(n)
    if len(out) != n:
        raise CheckpointError("truncated checkpoint")
    return out


def _read_array(fh) -> Optional[tuple[str, np.ndarray]]:
    head = fh.read(8)
    if not head:
        return None
    if len(head) != 8:
        raise CheckpointError("truncated checkpoint")
    (name_len,) = struct.unpack("<Q", head)
    name = _read_exact(fh, name_len).decode("utf-8")
    (dt_len,) = struct.unpack("<Q", _read_exact(fh, 8))
    dtype = np.dtype("<" + _read_exact(fh, dt_len).decode("utf-8"))
    (ndim,) = struct.unpack("<Q", _read_exact(fh, 8))
    shape = tuple(
        struct.unpack("<Q", _read_exact(fh, 8))[0] for _ in range(ndim)
    )
    (nbytes,) = struct.unpack("<Q", _read_exact(fh, 8))
    arr = np.frombuffer(_read_exact(fh, nbytes), dtype=dtype).reshape(shape)
    return name, arr.copy()


def save_checkpoint(path: str | Path, backend, extra: Optional[dict[str, Any]] = None) -> None:
    if isinstance(backend, NgramModel):
        kind = "ngram"
        config = asdict(backend.config)
        arrays = backend.count_arrays()
    elif isinstance(backend, TinyNeuralLM):
        kind = "neural"
        config = asdict(backend.config)
        arrays = dict(backend.params)
        arrays["__step_count"] = np.array([backend.step_count], dtype=np.int64)
        for name, val in backend.adam_m.items():
            arrays[f"__adam_m.{name}"] = val
        for name, val in backend.adam_v.items():
            arrays[f"__adam_v.{name}"] = val
    else:
        raise CheckpointError(f"cannot checkpoint backend of type {type(backend).__name__}")

    header = {
        "magic": _MAGIC,
        "format_version": FORMAT_VERSION,
        "backend": kind,
        "config": config,
        "vocabulary": list(backend.vocab.tokens),
        "unk_policy": "extend" if kind == "ngram" else "map",
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n\n")
        for name in sorted(arrays):
            _write_array(fh, name, arrays[name])


def read_header(path: str | Path) -> dict[str, Any]:
    with open(path, "rb") as fh:
        line = fh.readline()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CheckpointError(f"{path}: not a checkpoint file") from None
    if header.get("magic") != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {header.get('format_version')} "
            f"is not supported (expected {FORMAT_VERSION})"
        )
    return header


def load_checkpoint(path: str | Path):
    """Returns (backend, extra metadata)."""
    header = read_header(path)
    arrays: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        fh.readline()
        blank = fh.readline()
        if blank not in (b"\n", b"\r\n"):
            raise CheckpointError(f"{path}: malformed header separator")
        while True:
            item = _read_array(fh)
            if item is None:
                break
            arrays[item[0]] = item[1]

    vocab = Vocabulary(tuple(header["vocabulary"]))
    if header["backend"] == "ngram":
        config = NgramConfig(**header["config"])
        backend = NgramModel.from_count_arrays(vocab, config, arrays)
    elif header["backend"] == "neural":
        config = NeuralConfig(**header["config"])
        backend = TinyNeuralLM(vocab, config, seed=0)
        backend.step_count = int(arrays.pop("__step_count")[0])
        for name in list(backend.params):
            backend.params[name] = arrays[name]
            backend.adam_m[name] = arrays[f"__adam_m.{name}"]
            backend.adam_v[name] = arrays[f"__adam_v.{name}"]
    else:
        raise CheckpointError(f"{path}: unknown backend kind {header['backend']!r}")
    return backend, header.get("extra", {})


def checkpoint_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
