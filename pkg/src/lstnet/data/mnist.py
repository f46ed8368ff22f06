"""Locating MNIST digits.

The loader prefers IDX files on disk. When none are given it falls back to
the 5000-digit MNIST subset bundled with ``mlxtend`` (500 per class).
"""

from __future__ import annotations

import functools

import numpy as np

from .idx import IdxDataset, load_idx, to_unit_range


@functools.lru_cache(maxsize=1)
def _bundled_arrays() -> tuple:
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise FileNotFoundError(
            "no MNIST IDX directory given and mlxtend is not installed (pip install mlxtend)") from exc
    x, y = mnist_data()
    pixels = np.asarray(x, dtype=np.float64).reshape(-1, 28, 28)
    return to_unit_range(np.clip(pixels, 0, 255).astype(np.uint8))[:, None], np.asarray(y, np.int64)


def load_bundled_subset() -> IdxDataset:
    images, labels = _bundled_arrays()
    return IdxDataset(images.copy(), labels.copy())


def load_mnist(path=None) -> IdxDataset:
    if path:
        return load_idx(path)
    return load_bundled_subset()
