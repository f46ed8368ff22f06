"""IDX (MNIST) binary files: big-endian header, unsigned-byte payload."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class FormatError(ValueError):
    def __init__(self, path, offset: int, message: str):
        super().__init__(f"{path}: byte {offset}: {message}")
        self.path, self.offset = path, offset


@dataclass
class IdxDataset:
    """Images as float32 [M, 1, H, W] in [-1, 1] and integer labels."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "IdxDataset":
        return IdxDataset(self.images[idx], self.labels[idx])


def to_unit_range(pixels: np.ndarray) -> np.ndarray:
    return (pixels.astype(np.float32) / np.float32(127.5) - np.float32(1.0))


def to_bytes(images: np.ndarray) -> np.ndarray:
    return np.clip(np.rint((np.asarray(images, np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def read_idx(path) -> np.ndarray:
    """Read an unsigned-byte IDX array, validating header and length."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4:
        raise FormatError(path, len(raw), "truncated magic number")
    zero, dtype_code, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0 or dtype_code != 0x08:
        raise FormatError(path, 0, f"bad magic 0x{int.from_bytes(raw[:4], 'big'):08x}")
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise FormatError(path, len(raw), f"truncated header (expected {header_end} bytes)")
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    expected = header_end + int(np.prod(dims))
    if len(raw) != expected:
        raise FormatError(path, len(raw), f"payload size mismatch: expected {expected} bytes total")
    return np.frombuffer(raw, dtype=np.uint8, offset=header_end).reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">HBB", 0, 0x08, array.ndim))
        f.write(struct.pack(f">{array.ndim}I", *array.shape))
        f.write(array.tobytes())


def _expect_magic(path, magic: int) -> None:
    with open(path, "rb") as f:
        head = f.read(4)
    if len(head) < 4:
        raise FormatError(path, len(head), "truncated magic number")
    found = int.from_bytes(head, "big")
    if found != magic:
        raise FormatError(path, 0, f"bad magic 0x{found:08x}, expected 0x{magic:08x}")


def load_idx(images_path, labels_path=None) -> IdxDataset:
    """Load an image file (and optional label file) into an :class:`IdxDataset`.

    ``images_path`` may also be a directory holding ``images.idx`` and
    ``labels.idx`` or the standard ``train-images-idx3-ubyte`` names.
    """
    if os.path.isdir(images_path):
        images_path, labels_path = _find_pair(images_path)
    _expect_magic(images_path, IMAGE_MAGIC)
    pixels = read_idx(images_path)
    labels = np.zeros(len(pixels), np.int64)
    if labels_path is not None:
        _expect_magic(labels_path, LABEL_MAGIC)
        labels = read_idx(labels_path).astype(np.int64)
        if len(labels) != len(pixels):
            raise FormatError(labels_path, 4, f"{len(labels)} labels for {len(pixels)} images")
    return IdxDataset(to_unit_range(pixels)[:, None], labels)


def _find_pair(directory) -> tuple:
    for img, lab in (("images.idx", "labels.idx"),
                     ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")):
        ip, lp = os.path.join(directory, img), os.path.join(directory, lab)
        if os.path.exists(ip):
            return ip, (lp if os.path.exists(lp) else None)
    raise FileNotFoundError(f"no IDX image file found in {directory}")


def save_idx(directory, dataset: IdxDataset) -> None:
    os.makedirs(directory, exist_ok=True)
    write_idx(os.path.join(directory, "images.idx"), to_bytes(dataset.images[:, 0]))
    write_idx(os.path.join(directory, "labels.idx"), dataset.labels.astype(np.uint8))
