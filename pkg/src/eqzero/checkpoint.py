"""Flat binary checkpoint files for named parameter tensors.

Layout (version 1), chosen so that identical inputs always produce identical
bytes — no timestamps, no compression, entries sorted by name:

    line   b"eqzero-checkpoint 1\\n"
    lines  b"meta <key>=<value>\\n"          (sorted by key)
    then per tensor, sorted by name:
           b"tensor <name> <d0>x<d1>x...\\n"
           raw little-endian float64 values, C order, then b"\\n"
    line   b"end\\n"

Names and meta keys/values must not contain whitespace or newlines.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

MAGIC = b"eqzero-checkpoint 1"


def _check_token(token: str, what: str) -> str:
    if not token or any(ch.isspace() for ch in token):
        raise ValueError(f"{what} must be non-empty and whitespace-free, got {token!r}")
    return token


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray], meta: dict[str, str]) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC + b"\n")
    for key in sorted(meta):
        _check_token(key, "meta key")
        _check_token(str(meta[key]), "meta value")
        buf.write(f"meta {key}={meta[key]}\n".encode())
    for name in sorted(tensors):
        _check_token(name, "tensor name")
        arr = np.asarray(tensors[name], dtype=np.float64)
        if arr.ndim == 0:
            raise ValueError(f"tensor {name!r} is 0-dimensional; store it as shape (1,)")
        dims = "x".join(str(d) for d in arr.shape)
        buf.write(f"tensor {name} {dims}\n".encode())
        buf.write(arr.astype("<f8").tobytes(order="C"))
        buf.write(b"\n")
    buf.write(b"end\n")
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    raw = Path(path).read_bytes()
    view = memoryview(raw)
    pos = 0

    def read_line() -> str:
        nonlocal pos
        end = raw.find(b"\n", pos)
        if end < 0:
            raise ValueError(f"truncated checkpoint: {path}")
        line = raw[pos:end].decode()
        pos = end + 1
        return line

    if read_line() != MAGIC.decode():
        raise ValueError(f"not a version-1 checkpoint: {path}")
    meta: dict[str, str] = {}
    tensors: dict[str, np.ndarray] = {}
    while True:
        line = read_line()
        if line == "end":
            break
        if line.startswith("meta "):
            key, _, value = line[5:].partition("=")
            meta[key] = value
            continue
        if not line.startswith("tensor "):
            raise ValueError(f"unexpected checkpoint record {line!r} in {path}")
        _, name, dims = line.split(" ")
        shape = tuple(int(d) for d in dims.split("x"))
        nbytes = int(np.prod(shape)) * 8
        arr = np.frombuffer(view[pos : pos + nbytes], dtype="<f8").reshape(shape)
        tensors[name] = arr.astype(np.float64)
        pos += nbytes
        if raw[pos : pos + 1] != b"\n":
            raise ValueError(f"corrupt tensor record for {name!r} in {path}")
        pos += 1
    return tensors, meta
