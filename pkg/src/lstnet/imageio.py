"""Binary PGM (P5) images and panel grids; PNG when Pillow is installed."""

from __future__ import annotations

import re

import numpy as np

from .data.idx import to_bytes, to_unit_range


def write_pgm(path, image: np.ndarray) -> None:
    """Write a [-1, 1] grayscale image ([H, W] or [1, H, W]) as 8-bit P5."""
    pixels = to_bytes(np.asarray(image).reshape(np.asarray(image).shape[-2:]))
    h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit P5 file into a [1, H, W] float32 image in [-1, 1]."""
    with open(path, "rb") as f:
        raw = f.read()
    m = re.match(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if not m:
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    body = raw[m.end():]
    if len(body) != w * h:
        raise ValueError(f"{path}: expected {w * h} pixel bytes, found {len(body)}")
    return to_unit_range(np.frombuffer(body, np.uint8).reshape(1, h, w))


def write_png(path, image: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(to_bytes(np.asarray(image).reshape(np.asarray(image).shape[-2:]))).save(path)


def panel_grid(panels, separator_after: int | None = None, gap: int = 2) -> np.ndarray:
    """Lay [1, H, W] panels out left to right.

    Panels are separated by ``gap`` dark columns; the gap after panel
    ``separator_after`` is drawn bright to set that panel apart.
    """
    panels = [np.asarray(p).reshape(np.asarray(p).shape[-2:]) for p in panels]
    h = panels[0].shape[0]
    cols = []
    for i, p in enumerate(panels):
        cols.append(p)
        if i < len(panels) - 1:
            cols.append(np.full((h, gap), 1.0 if i == separator_after else -1.0, np.float32))
    return np.concatenate(cols, axis=1)[None].astype(np.float32)
