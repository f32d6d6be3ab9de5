"""Checkpoint file: a JSON header followed by raw little-endian float64 arrays.

Layout (all text is UTF-8)::

    line 1   MLSGAN-CHECKPOINT 1
    line 2   one JSON object, keys sorted, no whitespace:
             {"arrays": [[name, [dim, ...]], ...], "meta": {...}}
    rest     the arrays in header order, each as C-ordered float64 '<f8'

There are no timestamps, so identical contents give identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .exceptions import FormatError, ParseError

MAGIC = "MLSGAN-CHECKPOINT 1"


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    header = {
        "arrays": [[name, list(np.shape(arr))] for name, arr in arrays.items()],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(f"{MAGIC}\n{blob}\n".encode("utf-8"))
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    first = raw.find(b"\n")
    second = raw.find(b"\n", first + 1)
    if first < 0 or second < 0 or raw[:first].decode("utf-8", "replace") != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    try:
        header = json.loads(raw[first + 1: second])
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: corrupt checkpoint header ({exc})") from exc
    offset = second + 1
    arrays: dict[str, np.ndarray] = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * count
        if end > len(raw):
            raise ParseError(f"{path}: truncated while reading array {name!r}")
        arrays[name] = np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape).astype(np.float64)
        offset = end
    if offset != len(raw):
        raise ParseError(f"{path}: {len(raw) - offset} trailing bytes after last array")
    return arrays, header["meta"]
