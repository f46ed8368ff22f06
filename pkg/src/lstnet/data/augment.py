"""Deterministic image augmentations on [-1, 1] grayscale images.

Both functions accept [H, W], [C, H, W] or [N, C, H, W] arrays and operate
on the last two axes.
"""

from __future__ import annotations

import numbers

import numpy as np

from ..autograd.tensor import ContractError

BACKGROUND = -1.0


def rotate_image(image: np.ndarray, theta: float, fill: float = BACKGROUND) -> np.ndarray:
    """Rotate counter-clockwise (as displayed) by ``theta`` radians about the centre.

    Bilinear interpolation; samples falling outside the source read ``fill``.
    """
    image = np.asarray(image)
    if theta == 0:
        return image.copy()
    h, w = image.shape[-2:]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    # output pixel -> centred coordinates with y pointing up -> inverse rotation
    x, y = cols - cx, cy - rows
    c, s = np.cos(theta), np.sin(theta)
    src_col = cx + c * x + s * y
    src_row = cy - (-s * x + c * y)

    r0 = np.floor(src_row)
    c0 = np.floor(src_col)
    fr = (src_row - r0)
    fc = (src_col - c0)
    padded = np.pad(image.astype(np.float64), [(0, 0)] * (image.ndim - 2) + [(1, 1), (1, 1)],
                    constant_values=fill)

    def at(r, cc):
        ri = np.clip(r, -1, h).astype(np.intp) + 1
        ci = np.clip(cc, -1, w).astype(np.intp) + 1
        return padded[..., ri, ci]

    out = (at(r0, c0) * (1 - fr) * (1 - fc) + at(r0, c0 + 1) * (1 - fr) * fc
           + at(r0 + 1, c0) * fr * (1 - fc) + at(r0 + 1, c0 + 1) * fr * fc)
    return out.astype(image.dtype if image.dtype.kind == "f" else np.float32)


def _cross_filter(image: np.ndarray, reduce) -> np.ndarray:
    p = np.pad(image, [(0, 0)] * (image.ndim - 2) + [(1, 1), (1, 1)], mode="edge")
    centre = p[..., 1:-1, 1:-1]
    out = reduce(centre, p[..., :-2, 1:-1])
    out = reduce(out, p[..., 2:, 1:-1])
    out = reduce(out, p[..., 1:-1, :-2])
    return reduce(out, p[..., 1:-1, 2:])


def dilate(image: np.ndarray) -> np.ndarray:
    """One step of grey-level dilation with a 3x3 cross."""
    return _cross_filter(np.asarray(image), np.maximum)


def erode(image: np.ndarray) -> np.ndarray:
    """One step of grey-level erosion with a 3x3 cross."""
    return _cross_filter(np.asarray(image), np.minimum)


def dilate_erode(image: np.ndarray, level) -> np.ndarray:
    """``level`` > 0 dilates (thickens) that many times, ``level`` < 0 erodes."""
    if isinstance(level, bool) or not isinstance(level, numbers.Real) or float(level) != int(level):
        raise ContractError(f"dilation level must be an integer, got {level!r}")
    level = int(level)
    out = np.array(image, copy=True)
    step = dilate if level > 0 else erode
    for _ in range(abs(level)):
        out = step(out)
    return out
