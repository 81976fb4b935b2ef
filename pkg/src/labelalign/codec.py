"""2-D alignment offsets and their pixel/model-space codec.

Offsets live in image pixel units. The codec maps them into a normalized
range via ``encoded = (v - alpha) / beta`` and back via
``v = beta * encoded + alpha``; ``alpha`` is the assumed mean center of the
offset population and ``beta`` a positive scale. The offset composition law
``footprint_correction + roof_offset = roof_correction`` is exposed as
:func:`compose`.
"""
import math
from dataclasses import dataclass

import numpy as np

DEFAULT_BETA = 200.0


@dataclass(frozen=True)
class OffsetVec:
    """A 2-D offset in pixels (x grows rightward, y downward)."""

    dx: float
    dy: float

    def __post_init__(self):
        if not (math.isfinite(self.dx) and math.isfinite(self.dy)):
            raise ValueError(f"offset components must be finite, got ({self.dx}, {self.dy})")

    @classmethod
    def from_array(cls, arr) -> "OffsetVec":
        a = np.asarray(arr, dtype=np.float64)
        if a.shape != (2,):
            raise ValueError(f"expected a length-2 vector, got shape {a.shape}")
        return cls(float(a[0]), float(a[1]))

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy], dtype=np.float64)

    def norm(self) -> float:
        return math.hypot(self.dx, self.dy)


ZERO_OFFSET = OffsetVec(0.0, 0.0)


def compose(f: OffsetVec, o: OffsetVec) -> OffsetVec:
    """Componentwise sum: label->footprint plus footprint->roof gives label->roof."""
    return OffsetVec(f.dx + o.dx, f.dy + o.dy)


@dataclass(frozen=True)
class OffsetCodec:
    """Affine encode/decode between pixel offsets and normalized model space."""

    alpha: OffsetVec = ZERO_OFFSET
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be a positive finite scale, got {self.beta}")


def encode(codec: OffsetCodec, v: OffsetVec) -> OffsetVec:
    return OffsetVec((v.dx - codec.alpha.dx) / codec.beta, (v.dy - codec.alpha.dy) / codec.beta)


def decode(codec: OffsetCodec, ve: OffsetVec) -> OffsetVec:
    return OffsetVec(codec.beta * ve.dx + codec.alpha.dx, codec.beta * ve.dy + codec.alpha.dy)


def encode_array(codec: OffsetCodec, offsets: np.ndarray) -> np.ndarray:
    """Vectorized :func:`encode` over an (m, 2) array."""
    arr = np.asarray(offsets, dtype=np.float64)
    return (arr - codec.alpha.as_array()) / codec.beta


def decode_array(codec: OffsetCodec, encoded: np.ndarray) -> np.ndarray:
    """Vectorized :func:`decode` over an (m, 2) array."""
    arr = np.asarray(encoded, dtype=np.float64)
    return codec.beta * arr + codec.alpha.as_array()
