"""Evaluation metrics on [-1, 1] images.

Reported MSE values rescale images to [0, 1] and average over pixels, which
is the magnitude convention used for the comparison tables. The training
losses in :mod:`lstnet.autograd.functional` sum over pixels instead.
"""

from __future__ import annotations

import numpy as np

SSIM_WINDOW = 8
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PATCH_SIZE = 20
PATCH_COUNT = 20
MSE_CONVENTION = "per-pixel mean on images rescaled to [0, 1]"


def to_unit(images) -> np.ndarray:
    return (np.asarray(images, np.float64) + 1.0) / 2.0


def pixel_mse(pred, target) -> float:
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"prediction {pred.shape} and target {target.shape} differ")
    return float(np.mean((to_unit(pred) - to_unit(target)) ** 2))


def per_sample_mse(pred, target) -> np.ndarray:
    d = (to_unit(pred) - to_unit(target)) ** 2
    return d.reshape(len(d), -1).mean(axis=1)


def _box_mean(a: np.ndarray, k: int) -> np.ndarray:
    """Mean over every k x k window of the last two axes ('valid' placement)."""
    c = np.cumsum(np.cumsum(a, axis=-2), axis=-1)
    c = np.pad(c, [(0, 0)] * (a.ndim - 2) + [(1, 0), (1, 0)])
    s = c[..., k:, k:] - c[..., :-k, k:] - c[..., k:, :-k] + c[..., :-k, :-k]
    return s / (k * k)


def ssim(pred, target, window: int = SSIM_WINDOW, data_range: float = 1.0) -> float:
    """Mean structural similarity with a uniform ``window`` x ``window`` kernel.

    Inputs are [-1, 1] images of shape [..., H, W]; they are rescaled to
    [0, 1] first so ``data_range`` is 1.
    """
    x, y = to_unit(pred), to_unit(target)
    if x.shape != y.shape:
        raise ValueError(f"prediction {x.shape} and target {y.shape} differ")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx, my = _box_mean(x, window), _box_mean(y, window)
    # unbiased local (co)variances, as in the reference implementation
    norm = window * window / (window * window - 1)
    vx = (_box_mean(x * x, window) - mx * mx) * norm
    vy = (_box_mean(y * y, window) - my * my) * norm
    cov = (_box_mean(x * y, window) - mx * my) * norm
    s = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    return float(s.mean())


def horizon_table(pred_by_horizon: dict, target_by_horizon: dict) -> list:
    """One row per horizon: ``{"horizon", "mse", "ssim"}`` sorted by horizon."""
    rows = []
    for h in sorted(pred_by_horizon):
        p, t = pred_by_horizon[h], target_by_horizon[h]
        rows.append({"horizon": int(h), "mse": pixel_mse(p, t), "ssim": ssim(p, t)})
    return rows


def _patch_corners(mask: np.ndarray, size: int, moving: bool) -> np.ndarray:
    """Top-left corners of size x size windows that are wholly static, or touch motion."""
    counts = _box_mean(mask.astype(np.float64), size) * size * size
    ok = counts > 0.5 if moving else counts < 0.5
    return np.argwhere(ok)


def patch_mse(pred, target, masks, rng, count: int = PATCH_COUNT, size: int = PATCH_SIZE) -> dict:
    """MSE on random moving and static patches.

    ``pred``/``target`` are [N, 1, H, W]; ``masks`` [N, H, W] marks pixels
    whose content moved. A moving patch overlaps the mask, a static one does
    not. ``count`` patches per category are drawn per image when available.
    Returns ``{"moving": mse, "static": mse, "n_moving", "n_static"}``.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    pred, target = to_unit(pred)[:, 0], to_unit(target)[:, 0]
    sums = {"moving": [], "static": []}
    for n in range(len(pred)):
        err = (pred[n] - target[n]) ** 2
        for cat in ("moving", "static"):
            corners = _patch_corners(masks[n], size, cat == "moving")
            if len(corners) == 0:
                continue
            pick = corners[rng.choice(len(corners), size=min(count, len(corners)), replace=False)]
            for r, c in pick:
                sums[cat].append(err[r:r + size, c:c + size].mean())
    out = {}
    for cat, vals in sums.items():
        out[cat] = float(np.mean(vals)) if vals else float("nan")
        out[f"n_{cat}"] = len(vals)
    return out
