"""Seeded Gaussian misplacement for footprint batches.

Simulates historical-label displacement: a noise field N is drawn per batch
and subtracted from the footprint coordinates under the validity mask, so
the displaced labels are ``(footprints - N) * mask`` and the per-instance
recovery target is the noise itself (footprint = displaced + target).

Draws are keyed per (seed, instance index), so sampling is deterministic
and independent of evaluation order. Samples are snapped to a 2^-20 px
lattice: statistically invisible, but it makes the subtraction exact in
float64 on integer-lattice footprints, so inject followed by translating
back by the recovery target recovers the input bit-for-bit.
"""
from dataclasses import dataclass

import numpy as np

from ._rng import NOISE_STREAM, SUBSAMPLE_STREAM, keyed_rng
from .geometry import PolygonBatch, pad_batch, unpad_batch

RIGID = "rigid"
PER_KEYPOINT = "per_keypoint"
NOISE_MODES = (RIGID, PER_KEYPOINT)

_LATTICE = 2.0**20


@dataclass(frozen=True)
class NoiseConfig:
    sigma: float
    mode: str = RIGID
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be finite and non-negative, got {self.sigma}")
        if self.mode not in NOISE_MODES:
            raise ValueError(f"mode must be one of {NOISE_MODES}, got {self.mode!r}")
        if not (isinstance(self.seed, int) and self.seed >= 0):
            raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")


@dataclass(frozen=True, eq=False)
class NoiseField:
    """Per-keypoint offsets, (count, max_vertices, 2); rigid fields repeat rows."""

    offsets: np.ndarray

    def __post_init__(self):
        arr = np.array(self.offsets, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise ValueError(f"offsets must have shape (count, max_vertices, 2), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("noise offsets must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "offsets", arr)


def _snap(x: np.ndarray) -> np.ndarray:
    return np.rint(x * _LATTICE) / _LATTICE


def sample_noise(batch: PolygonBatch, cfg: NoiseConfig) -> NoiseField:
    """Draw the noise field for a batch; rigid mode repeats one draw per instance."""
    m, l = batch.validity.shape
    out = np.zeros((m, l, 2), dtype=np.float64)
    for i in range(m):
        rng = keyed_rng(cfg.seed, NOISE_STREAM, i)
        if cfg.mode == RIGID:
            out[i, :, :] = _snap(rng.normal(0.0, cfg.sigma, 2))
        else:
            out[i] = _snap(rng.normal(0.0, cfg.sigma, (l, 2)))
    return NoiseField(out)


def inject(footprints: PolygonBatch, field: NoiseField) -> tuple[PolygonBatch, np.ndarray]:
    """Displace footprints by the noise field.

    Returns the displaced batch and the per-instance recovery targets as an
    (m, 2) array: the rigid draw itself, or the mean over valid keypoints in
    per-keypoint mode. Translating the displaced batch by the targets undoes
    rigid noise exactly.
    """
    if field.offsets.shape != footprints.coords.shape:
        raise ValueError(
            f"noise field shape {field.offsets.shape} does not match batch {footprints.coords.shape}"
        )
    mask = footprints.validity[:, :, None]
    coords = (footprints.coords - field.offsets) * mask
    noisy = PolygonBatch(coords, footprints.validity)
    counts = footprints.vertex_counts.astype(np.float64)
    first_rows = field.offsets[:, 0, :]
    # A field with constant rows within every instance is rigid; returning the
    # row itself (not its mean) keeps the recovery target exact.
    spread = (np.abs(field.offsets - first_rows[:, None, :]) * mask).max()
    if spread == 0.0:
        targets = first_rows
    else:
        targets = (field.offsets * mask).sum(axis=1) / counts[:, None]
    targets = targets.copy()
    targets.flags.writeable = False
    return noisy, targets


def subsample(batch: PolygonBatch, m_prime: int, seed: int) -> PolygonBatch:
    """Uniform sample of instances without replacement, deterministic under seed."""
    if not 1 <= m_prime <= batch.count:
        raise ValueError(f"m_prime must be in [1, {batch.count}], got {m_prime}")
    rng = keyed_rng(seed, SUBSAMPLE_STREAM)
    idx = rng.choice(batch.count, size=m_prime, replace=False)
    polys = unpad_batch(batch)
    return pad_batch([polys[int(i)] for i in idx])
