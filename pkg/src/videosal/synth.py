"""Synthetic moving-blob videos with ground-truth densities and fixations.

Each video tracks a handful of Gaussian blobs on a reflected random walk.
Frames render the blob intensities (grayscale replicated to 3 channels),
the ground-truth density is the same Gaussian mixture normalized to sum 1,
and fixations combine the top-density pixels with seeded samples drawn from
the density.  Everything is deterministic per (seed, video index).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .metrics import FixationRecord


@dataclass(frozen=True)
class SyntheticSpec:
    videos: int = 8
    frames: int = 12
    height: int = 32
    width: int = 64
    blobs: int = 2
    blob_sigma: float = 4.0
    step_sigma: float = 2.5
    fixations_per_frame: int = 10
    seed: int = 0

    def validate(self) -> None:
        if self.videos < 1 or self.frames < 1:
            raise ConfigurationError("need at least one video and one frame")
        if self.blobs < 1:
            raise ConfigurationError("need at least one blob")
        if self.blob_sigma <= 0 or self.step_sigma < 0:
            raise ConfigurationError("blob sigma must be positive, step sigma non-negative")
        if 6 * self.blob_sigma > min(self.height, self.width):
            raise ConfigurationError(
                f"blob sigma {self.blob_sigma} too large for {self.height}x{self.width} frames"
            )
        if self.fixations_per_frame < 1:
            raise ConfigurationError("need at least one fixation per frame")


@dataclass
class Video:
    name: str
    frames: np.ndarray                      # (N, H, W, 3) float32 in [0, 1]
    density: np.ndarray                     # (N, H, W) float64, sums to 1 per frame
    fixations: list[FixationRecord]
    centers: np.ndarray = field(default=None, repr=False)  # (N, blobs, 2) walk trace

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def _reflect(x: float, lo: float, hi: float) -> float:
    span = hi - lo
    x = (x - lo) % (2 * span)
    return lo + (x if x <= span else 2 * span - x)


def _walk(rng, n_frames, blobs, height, width, step_sigma):
    margin = 2.0
    centers = np.empty((n_frames, blobs, 2))
    pos = np.stack([
        rng.uniform(margin, height - margin, blobs),
        rng.uniform(margin, width - margin, blobs),
    ], axis=1)
    for t in range(n_frames):
        centers[t] = pos
        steps = rng.normal(0.0, step_sigma, (blobs, 2))
        for b in range(blobs):
            pos[b, 0] = _reflect(pos[b, 0] + steps[b, 0], margin, height - margin)
            pos[b, 1] = _reflect(pos[b, 1] + steps[b, 1], margin, width - margin)
    return centers


def _render_mixture(centers_t, height, width, sigma):
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    total = np.zeros((height, width))
    for cy, cx in centers_t:
        total += np.exp(-((rows - cy) ** 2 + (cols - cx) ** 2) / (2.0 * sigma * sigma))
    return total


def _pick_fixations(rng, density, count):
    h, w = density.shape
    flat = density.reshape(-1)
    k_top = max(1, count // 2)
    top = np.argsort(flat)[::-1][:k_top]
    sampled = rng.choice(h * w, size=count - k_top, replace=False, p=flat / flat.sum()) \
        if count > k_top else np.array([], dtype=int)
    chosen = sorted(set(top.tolist()) | set(sampled.tolist()))
    return tuple((int(i // w), int(i % w)) for i in chosen)


def generate_video(spec: SyntheticSpec, index: int) -> Video:
    rng = np.random.default_rng([spec.seed, index])
    centers = _walk(rng, spec.frames, spec.blobs, spec.height, spec.width, spec.step_sigma)
    frames = np.empty((spec.frames, spec.height, spec.width, 3), dtype=np.float32)
    density = np.empty((spec.frames, spec.height, spec.width))
    fixations = []
    for t in range(spec.frames):
        mix = _render_mixture(centers[t], spec.height, spec.width, spec.blob_sigma)
        gray = np.clip(mix, 0.0, 1.0).astype(np.float32)
        frames[t] = gray[..., None]
        density[t] = mix / mix.sum()
        points = _pick_fixations(rng, density[t], spec.fixations_per_frame)
        fixations.append(FixationRecord(frame=t, points=points,
                                        height=spec.height, width=spec.width))
    return Video(name=f"v{index:03d}", frames=frames, density=density,
                 fixations=fixations, centers=centers)


def generate_dataset(spec: SyntheticSpec) -> list[Video]:
    spec.validate()
    return [generate_video(spec, i) for i in range(spec.videos)]


def synth_generate(spec: SyntheticSpec, out_dir) -> list[str]:
    """Generate and write a dataset; returns the written video names."""
    from .io import save_dataset

    videos = generate_dataset(spec)
    save_dataset(videos, out_dir, spec)
    return [v.name for v in videos]
