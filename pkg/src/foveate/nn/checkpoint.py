"""Self-describing binary checkpoint container.

Layout (all little-endian):

    magic   4 bytes  "FVNN"
    version u32      currently 1
    count   u32      number of named tensors
    then per tensor:
        name_len u16, name utf-8, rank u32, dims rank*u64, payload f64*prod(dims)

Tensors are written in sorted-name order so identical states produce
identical bytes.  String metadata (config hashes, run provenance) rides
along as reserved tensors named ``__meta__/<key>`` whose payload is the
string's code points; ``load_checkpoint`` splits these back out.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"FVNN"
VERSION = 1
META_PREFIX = "__meta__/"


class CheckpointError(IOError):
    """Malformed or truncated checkpoint file."""


def _encode_meta(text: str) -> np.ndarray:
    return np.array([float(ord(ch)) for ch in text], dtype=np.float64)


def _decode_meta(arr: np.ndarray) -> str:
    return "".join(chr(int(v)) for v in arr.ravel())


def save_checkpoint(path, state, meta=None) -> None:
    """Write a name->array mapping (or ParameterSet) plus string metadata."""
    if hasattr(state, "state_dict"):
        state = state.state_dict()
    tensors = dict(state)
    for key, text in (meta or {}).items():
        tensors[META_PREFIX + key] = _encode_meta(str(text))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(tensors)))
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype=np.float64)
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.astype("<f8", copy=False).tobytes())


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path):
    """Read a checkpoint; returns (tensors, meta) as plain dicts."""
    tensors = {}
    meta = {}
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise CheckpointError(f"{path}: not a FVNN checkpoint")
        version, count = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, "rank"))
            dims = struct.unpack(
                f"<{rank}Q", _read_exact(fh, 8 * rank, f"dims of {name}")
            )
            n = 1
            for d in dims:
                n *= d
            payload = _read_exact(fh, 8 * n, f"payload of {name}")
            arr = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)
            if name.startswith(META_PREFIX):
                meta[name[len(META_PREFIX) :]] = _decode_meta(arr)
            else:
                tensors[name] = arr
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes after last tensor")
    return tensors, meta


def filter_state(state, exclude_prefixes):
    """Copy of ``state`` without entries under any of the given prefixes."""
    return {
        k: v
        for k, v in state.items()
        if not any(k.startswith(p) for p in exclude_prefixes)
    }
