"""Synthetic kinematic sequences: sprites on a static background.

Each sprite moves with constant speed and constant curvature (its heading
turns by a fixed angle every frame). Sprite 0 plays the role of the tracked
vehicle: it is drawn at a fixed intensity, starts with a heading inside
``tracked_heading`` so the label never wraps, and its heading in degrees is
the per-frame steering label. An optional
camera pan shifts the whole scene horizontally.

Persisted layout: ``manifest.json`` plus one raw little-endian float32 blob
per sequence (``seq_00000.f32``, frames [T, 1, S, S]).
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .pools import array_digest

HISTORY = 6
MAX_HORIZON = 5


@dataclass
class SequenceConfig:
    count: int = 256
    length: int = 16
    size: int = 64
    sprites: int = 3
    radius: tuple = (5.0, 8.0)
    speed: tuple = (1.5, 3.0)
    curvature: tuple = (-0.12, 0.12)      # heading change per frame, radians
    intensity: tuple = (0.3, 0.7)
    pan_speed: float = 0.0                # pixels per frame
    blobs: int = 4
    tracked_intensity: float = 1.0
    tracked_heading: tuple = (-90.0, 90.0)   # initial heading of sprite 0, degrees

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("radius", "speed", "curvature", "intensity", "tracked_heading"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceConfig":
        d = dict(d)
        for k in ("radius", "speed", "curvature", "intensity", "tracked_heading"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class SequenceSample:
    frames: np.ndarray          # [T, 1, S, S] in [-1, 1]
    heading: np.ndarray         # [T] degrees, sprite 0
    moving: np.ndarray          # [T, S, S] bool: pixels covered by a sprite
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def movement_mask(self, t: int, h: int = 1) -> np.ndarray:
        """Pixels whose content changes between frames t and t+h (ground truth)."""
        return self.moving[t] | self.moving[t + h]


def _background(rng, size, blobs, pan) -> callable:
    centres = rng.uniform(0, size + abs(pan), (blobs, 2))
    widths = rng.uniform(size / 8, size / 3, blobs)
    amps = rng.uniform(0.15, 0.45, blobs)
    base = rng.uniform(-0.95, -0.75)

    def render(shift):
        yy, xx = np.meshgrid(np.arange(size, dtype=np.float64),
                             np.arange(size, dtype=np.float64) + shift, indexing="ij")
        img = np.full((size, size), base)
        for (cy, cx), w, a in zip(centres, widths, amps):
            img += a * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * w * w))
        return img

    return render


def _trajectory(rng, cfg: SequenceConfig, margin: float, heading_range=(-180.0, 180.0)) -> tuple:
    """Sample a constant-curvature path that stays inside the frame."""
    lo, hi = np.radians(heading_range[0]), np.radians(heading_range[1])
    for _ in range(1000):
        speed = rng.uniform(*cfg.speed)
        kappa = rng.uniform(*cfg.curvature)
        heading = rng.uniform(lo, hi)
        start = rng.uniform(margin, cfg.size - margin, 2)
        t = np.arange(cfg.length)
        phi = heading + kappa * t
        steps = speed * np.stack([np.cos(phi), np.sin(phi)], axis=1)
        pos = start + np.concatenate([[[0.0, 0.0]], np.cumsum(steps[:-1], axis=0)])
        if np.all((pos >= margin) & (pos <= cfg.size - 1 - margin)):
            return pos, phi
    raise RuntimeError("could not place a trajectory inside the frame; lower speed or length")


def render_sequence(cfg: SequenceConfig, seed: int) -> SequenceSample:
    rng = np.random.default_rng(seed)
    size, T = cfg.size, cfg.length
    pan = cfg.pan_speed * (T - 1)
    bg = _background(rng, size, cfg.blobs, pan)
    sprites = []
    for i in range(cfg.sprites):
        r = rng.uniform(*cfg.radius)
        if i == 0:
            pos, phi = _trajectory(rng, cfg, r * 0.5, cfg.tracked_heading)
            sprites.append((r, cfg.tracked_intensity, pos, phi))
        else:
            pos, phi = _trajectory(rng, cfg, r * 0.5)
            sprites.append((r, rng.uniform(*cfg.intensity), pos, phi))

    yy, xx = np.meshgrid(np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64), indexing="ij")
    frames = np.empty((T, 1, size, size), np.float32)
    moving = np.zeros((T, size, size), bool)
    for t in range(T):
        img = bg(cfg.pan_speed * t)
        for r, inten, pos, _ in sprites:
            x, y = pos[t]
            alpha = np.clip(r - np.hypot(xx - (x - cfg.pan_speed * t), yy - y) + 0.5, 0.0, 1.0)
            img = img * (1 - alpha) + inten * alpha
            moving[t] |= alpha > 0
        if cfg.pan_speed:
            moving[t] |= True
        frames[t, 0] = np.clip(img, -1.0, 1.0)
    heading = np.degrees(sprites[0][3]) if sprites else np.zeros(T)
    return SequenceSample(frames, heading.astype(np.float64), moving, seed)


def gen_sequences(cfg: SequenceConfig, seed: int, count: int | None = None) -> list:
    """``count`` sequences with per-sequence seeds ``seed * 100003 + i``."""
    n = cfg.count if count is None else count
    return [render_sequence(cfg, seed * 100003 + i) for i in range(n)]


def stack(samples) -> tuple:
    frames = np.stack([s.frames for s in samples])
    heading = np.stack([s.heading for s in samples])
    moving = np.stack([s.moving for s in samples])
    return frames, heading, moving


@dataclass
class SequenceTriplets:
    history: np.ndarray    # [B, n, 1, S, S], oldest first, last = current frame
    target: np.ndarray     # [B, 1, S, S]
    theta: np.ndarray      # [B] frame steps
    seq: np.ndarray
    t: np.ndarray          # index of the current frame

    def __len__(self) -> int:
        return len(self.theta)


def sample_sequence_triplets(frames: np.ndarray, batch_size: int, rng, history: int = HISTORY,
                             max_horizon: int = MAX_HORIZON, theta=None) -> SequenceTriplets:
    """Current frame plus ``history - 1`` predecessors and a target 1..max_horizon ahead."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    n_seq, T = frames.shape[:2]
    if T < history + max_horizon:
        raise ValueError(f"sequences of length {T} are too short for history {history} + horizon {max_horizon}")
    s = rng.integers(0, n_seq, batch_size)
    th = rng.integers(1, max_horizon + 1, batch_size) if theta is None else np.full(batch_size, int(theta))
    t = np.array([rng.integers(history - 1, T - h) for h in th])
    offs = np.arange(-history + 1, 1)
    hist = frames[s[:, None], t[:, None] + offs[None, :]]
    return SequenceTriplets(hist, frames[s, t + th], th.astype(np.float32), s, t)


def save_sequences(directory, cfg: SequenceConfig, seed: int, samples) -> dict:
    os.makedirs(directory, exist_ok=True)
    for i, s in enumerate(samples):
        s.frames.astype("<f4").tofile(os.path.join(directory, f"seq_{i:05d}.f32"))
    frames, heading, moving = stack(samples)
    manifest = {
        "format": "lstnet-sequences",
        "version": 1,
        "shape": list(frames.shape[1:]),
        "count": len(samples),
        "seed": seed,
        "config": cfg.to_dict(),
        "headings": heading.tolist(),
        "digest": array_digest(frames),
    }
    with open(os.path.join(directory, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    np.save(os.path.join(directory, "moving.npy"), np.packbits(moving, axis=-1))
    return manifest


def load_sequences(directory) -> tuple:
    """Return (frames [N, T, 1, S, S], headings [N, T], moving [N, T, S, S], manifest)."""
    with open(os.path.join(directory, "manifest.json")) as f:
        manifest = json.load(f)
    shape = tuple(manifest["shape"])
    frames = np.stack([np.fromfile(os.path.join(directory, f"seq_{i:05d}.f32"), dtype="<f4").reshape(shape)
                       for i in range(manifest["count"])]).astype(np.float32)
    size = shape[-1]
    moving = np.unpackbits(np.load(os.path.join(directory, "moving.npy")), axis=-1)[..., :size].astype(bool)
    return frames, np.asarray(manifest["headings"]), moving, manifest
