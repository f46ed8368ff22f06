"""Augmentation pools and (source, target, control) triplet sampling."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .augment import dilate_erode, rotate_image
from .idx import IdxDataset

ROTATION_COUNT = 45
ROTATION_PER_CLASS = 60
DILATION_SAMPLES = 5000
DILATION_LEVELS = (-2, -1, 1, 2)
MAX_DILATION_STEP = 2


class DataError(ValueError):
    pass


def rotation_angles(count: int = ROTATION_COUNT, limit: float = np.pi / 4) -> np.ndarray:
    """``count`` evenly spaced angles strictly inside (-limit, limit) (cell midpoints)."""
    width = 2 * limit / count
    angles = -limit + (np.arange(count) + 0.5) * width
    angles[np.isclose(angles, 0.0, atol=1e-12)] = 0.0
    return angles


def augment(image: np.ndarray, kind: str, value) -> np.ndarray:
    if kind == "rotation":
        return rotate_image(image, float(value))
    if kind == "dilation":
        return dilate_erode(image, int(value))
    raise ValueError(f"unknown augmentation kind {kind!r}")


def select_per_class(labels: np.ndarray, per_class: int, rng: np.random.Generator) -> np.ndarray:
    """Random indices with exactly ``per_class`` examples of each label, sorted."""
    chosen = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < per_class:
            raise DataError(f"class {c} has {len(idx)} examples, need {per_class}")
        chosen.append(rng.choice(idx, size=per_class, replace=False))
    return np.sort(np.concatenate(chosen))


def split_dataset(dataset: IdxDataset, test_per_class: int, seed: int) -> tuple:
    """Class-balanced held-out split; returns (train, test)."""
    rng = np.random.default_rng(seed)
    test_idx = select_per_class(dataset.labels, test_per_class, rng)
    mask = np.ones(len(dataset), bool)
    mask[test_idx] = False
    return dataset.subset(np.flatnonzero(mask)), dataset.subset(test_idx)


@dataclass
class AugmentedPool:
    """Originals, their augmentation orbits, and the images the VAE trains on.

    ``augmented[k, m]`` is original ``k`` transformed by ``controls[m]``.
    ``orbit_controls`` / ``orbit_images`` add the identity element when it is
    not already one of the augmentations, so triplets can start or end at the
    unmodified digit.
    """

    kind: str
    base: IdxDataset
    source_index: np.ndarray
    controls: np.ndarray
    augmented: np.ndarray

    @property
    def originals(self) -> np.ndarray:
        return self.base.images[self.source_index]

    @property
    def augmentation_count(self) -> int:
        return int(self.augmented.shape[0] * self.augmented.shape[1])

    @property
    def orbit_controls(self) -> np.ndarray:
        if np.any(self.controls == 0):
            return self.controls
        return np.sort(np.concatenate([self.controls, [0]])).astype(self.controls.dtype)

    def orbit_images(self, k) -> np.ndarray:
        if np.any(self.controls == 0):
            return self.augmented[k]
        pos = int(np.searchsorted(self.controls, 0))
        return np.insert(self.augmented[k], pos, self.originals[k], axis=0)

    def training_images(self) -> np.ndarray:
        """Originals of the base split merged with every augmentation."""
        flat = self.augmented.reshape((-1,) + self.augmented.shape[2:])
        return np.concatenate([self.base.images, flat], axis=0)

    def digest(self) -> str:
        return array_digest(self.source_index, self.controls, self.augmented)


def array_digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def _build(kind, dataset, idx, controls) -> AugmentedPool:
    originals = dataset.images[idx]
    aug = np.stack([augment(originals, kind, v) for v in controls], axis=1)
    return AugmentedPool(kind, dataset, idx, np.asarray(controls), aug.astype(np.float32))


def make_rotation_set(dataset: IdxDataset, seed: int, per_class: int = ROTATION_PER_CLASS,
                      count: int = ROTATION_COUNT) -> AugmentedPool:
    rng = np.random.default_rng(seed)
    idx = select_per_class(dataset.labels, per_class, rng)
    return _build("rotation", dataset, idx, rotation_angles(count))


def make_dilation_set(dataset: IdxDataset, seed: int, samples: int = DILATION_SAMPLES,
                      levels=DILATION_LEVELS) -> AugmentedPool:
    n_classes = len(np.unique(dataset.labels))
    if samples % n_classes:
        raise DataError(f"{samples} samples cannot be spread evenly over {n_classes} classes")
    rng = np.random.default_rng(seed)
    idx = select_per_class(dataset.labels, samples // n_classes, rng)
    return _build("dilation", dataset, idx, np.asarray(levels, dtype=np.int64))


@dataclass
class TripletBatch:
    source: np.ndarray     # [B, 1, H, W]
    target: np.ndarray     # [B, 1, H, W]
    theta: np.ndarray      # [B]
    original: np.ndarray   # [B] index into pool originals
    source_control: np.ndarray
    target_control: np.ndarray

    def __len__(self) -> int:
        return len(self.theta)


def _pair_indices(pool: AugmentedPool, size: int, rng: np.random.Generator) -> tuple:
    controls = pool.orbit_controls
    m = len(controls)
    if pool.kind == "rotation":
        # ordered pairs of distinct augmentations
        i = rng.integers(0, m, size)
        j = rng.integers(0, m - 1, size)
        j = j + (j >= i)
        return i, j
    # dilation: target level within MAX_DILATION_STEP of the source level
    i = rng.integers(0, m, size)
    j = np.empty(size, np.int64)
    u = rng.random(size)
    for n in range(size):
        ok = np.flatnonzero(np.abs(controls - controls[i[n]]) <= MAX_DILATION_STEP)
        j[n] = ok[min(int(u[n] * len(ok)), len(ok) - 1)]
    return i, j


def sample_triplets(pool: AugmentedPool, batch_size: int, rng) -> TripletBatch:
    """Random pairs within one original's augmentation orbit.

    ``theta`` is the signed control difference ``control_j - control_i``.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    k = rng.integers(0, pool.augmented.shape[0], batch_size)
    i, j = _pair_indices(pool, batch_size, rng)
    controls = pool.orbit_controls
    if np.any(pool.controls == 0):
        src, tgt = pool.augmented[k, i], pool.augmented[k, j]
    else:
        orbit = np.stack([pool.orbit_images(kk) for kk in k])
        ar = np.arange(batch_size)
        src, tgt = orbit[ar, i], orbit[ar, j]
    theta = (controls[j] - controls[i]).astype(np.float32)
    return TripletBatch(src, tgt, theta, k, controls[i], controls[j])


def make_eval_triplets(test: IdxDataset, kind: str, count: int, seed: int) -> TripletBatch:
    """Held-out triplets built on the fly from digits never augmented for training."""
    rng = np.random.default_rng(seed)
    k = rng.integers(0, len(test), count)
    if kind == "rotation":
        controls = rotation_angles()
        pool = AugmentedPool("rotation", test, k, controls, np.empty((count, 0)))
    elif kind == "dilation":
        controls = np.asarray(DILATION_LEVELS, np.int64)
        pool = AugmentedPool("dilation", test, k, controls, np.empty((count, 0)))
    else:
        raise ValueError(f"no single-operation eval set for kind {kind!r}")
    i, j = _pair_indices(pool, count, rng)
    oc = pool.orbit_controls
    originals = test.images[k]
    src = np.stack([augment(originals[n], kind, oc[i[n]]) for n in range(count)])
    tgt = np.stack([augment(originals[n], kind, oc[j[n]]) for n in range(count)])
    theta = (oc[j] - oc[i]).astype(np.float32)
    return TripletBatch(src.astype(np.float32), tgt.astype(np.float32), theta, k, oc[i], oc[j])


@dataclass
class CombinedEval:
    source: np.ndarray
    target: np.ndarray
    angle: np.ndarray
    level: np.ndarray


def make_combined_eval(test: IdxDataset, count: int, seed: int) -> CombinedEval:
    """Unmodified held-out digits and their rotate-then-dilate ground truth."""
    rng = np.random.default_rng(seed)
    k = rng.integers(0, len(test), count)
    angles = rotation_angles()
    angle = angles[rng.integers(0, len(angles), count)]
    level = np.asarray(DILATION_LEVELS)[rng.integers(0, len(DILATION_LEVELS), count)]
    src = test.images[k]
    tgt = np.stack([dilate_erode(rotate_image(src[n], angle[n]), int(level[n])) for n in range(count)])
    return CombinedEval(src, tgt.astype(np.float32), angle.astype(np.float32), level.astype(np.float32))
