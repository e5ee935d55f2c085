"""Binary checkpoints: named parameter arrays, restored by path.

Layout (little-endian): magic ``HMCK``, one version byte, uint32 entry
count, then per entry a uint16 path length, the utf-8 path, a uint8 rank,
uint32 dims, and the raw float64 data.  Paths are the slash-separated
parameter names the model reports, so a checkpoint is valid exactly when
the model's architecture matches.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError

MAGIC = b"HMCK"
VERSION = 1


def save_checkpoint(path, named_params):
    """Write (path, Tensor) pairs; iteration order is preserved on disk."""
    entries = list(named_params)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", VERSION))
        fh.write(struct.pack("<I", len(entries)))
        for name, tensor in entries:
            raw = name.encode("utf-8")
            arr = tensor.data
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path) -> dict:
    """Read a checkpoint into an ordered {path: ndarray} mapping."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"checkpoint {path} unreadable: {exc}") from None
    if raw[:4] != MAGIC:
        raise DataError(f"checkpoint {path} has bad magic {raw[:4]!r}")
    version = raw[4]
    if version != VERSION:
        raise DataError(f"checkpoint {path} is version {version}, expected {VERSION}")
    (count,) = struct.unpack_from("<I", raw, 5)
    off = 9
    out = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + name_len].decode("utf-8")
        off += name_len
        ndim = raw[off]
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        out[name] = (
            np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape).copy()
        )
        off += 8 * n
    return out


def apply_checkpoint(model, state: dict):
    """Copy arrays into the model's parameters, validating names and shapes."""
    params = dict(model.named_parameters())
    missing = sorted(set(params) - set(state))
    unexpected = sorted(set(state) - set(params))
    if missing or unexpected:
        detail = []
        if missing:
            detail.append(f"missing {missing[0]}")
        if unexpected:
            detail.append(f"unexpected {unexpected[0]}")
        raise ContractError(
            f"checkpoint does not match model ({'; '.join(detail)}; "
            f"{len(missing)} missing, {len(unexpected)} unexpected in total)"
        )
    for name, tensor in params.items():
        arr = state[name]
        if arr.shape != tensor.data.shape:
            raise ContractError(
                f"checkpoint entry {name} has shape {arr.shape}, "
                f"model expects {tensor.data.shape}"
            )
    for name, tensor in params.items():
        np.copyto(tensor.data, state[name])
