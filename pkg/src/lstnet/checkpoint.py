"""Versioned binary checkpoints.

Layout::

    b"LSTN" | u32 version | u32 header_len | header (UTF-8 JSON) | blobs

Every blob is a little-endian float32 array; the header lists its name,
shape and byte offset relative to the start of the blob section. The JSON is
written with sorted keys so that save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"LSTN"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


class CheckpointVersionError(CheckpointFormatError):
    """Raised for files written by another format version."""


@dataclass
class Checkpoint:
    arrays: dict                      # name -> float32 ndarray
    meta: dict = field(default_factory=dict)   # config echo, iteration, rng state, ...

    def __eq__(self, other) -> bool:
        if not isinstance(other, Checkpoint) or self.meta != other.meta:
            return False
        if list(self.arrays) != list(other.arrays):
            return False
        return all(np.array_equal(self.arrays[k], other.arrays[k]) for k in self.arrays)


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    entries, blobs, offset = [], [], 0
    for name, arr in ckpt.arrays.items():
        a = np.asarray(arr, dtype="<f4")   # ascontiguousarray would promote 0-d arrays
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(a.tobytes())
        offset += a.nbytes
    header = json.dumps({"arrays": entries, "meta": ckpt.meta}, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<II", VERSION, len(header)) + header + b"".join(blobs)


def decode_checkpoint(raw: bytes, path="<bytes>") -> Checkpoint:
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint (bad magic {raw[:4]!r})")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise CheckpointVersionError(
            f"{path}: checkpoint format version {version}, this build reads version {VERSION}; "
            f"re-save it with a matching release or convert it")
    if len(raw) < 12 + hlen:
        raise CheckpointFormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: unreadable header ({exc})") from exc
    body = memoryview(raw)[12 + hlen:]
    arrays = {}
    for e in header["arrays"]:
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        end = e["offset"] + 4 * n
        if end > len(body):
            raise CheckpointFormatError(f"{path}: blob {e['name']} runs past end of file")
        arrays[e["name"]] = np.frombuffer(body[e["offset"]:end], dtype="<f4").reshape(tuple(e["shape"])).astype(np.float32)
    return Checkpoint(arrays, header["meta"])


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(encode_checkpoint(ckpt))
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        return decode_checkpoint(f.read(), path)
