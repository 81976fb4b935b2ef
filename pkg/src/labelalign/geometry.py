"""Polygon primitives, padded batches, and bit-exact rasterization.

Coordinates follow the image convention: x grows rightward, y grows
downward, and pixel (i, j) covers the unit square with center
(i + 0.5, j + 0.5). Polygons are closed rings (the edge from the last
vertex back to the first is implicit) and are not required to be simple;
rasterization uses the even-odd rule, so self-intersecting rings still have
a defined interior. The boundary convention is half-open: an edge crossing
a center row counts when min(y1, y2) <= yc < max(y1, y2) and the center is
strictly left of the intersection, so two polygons sharing an edge never
both claim a pixel.

Instance batches are padded to a common vertex count with a binary validity
mask: row i has ones for its first n_i entries and zeros after, and padded
coordinates are stored as zero. All types are immutable after construction
and every operation is a pure function.
"""
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import fill_mask
from .codec import OffsetVec

# Below this absolute shoelace area (px^2) the area centroid is undefined
# and the vertex mean is used instead.
DEGENERATE_AREA = 1e-9

AREA = "area"
VERTEX_MEAN = "vertex_mean"
CENTROID_MODES = (AREA, VERTEX_MEAN)


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"coordinates must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Polygon:
    """A closed ring of >= 3 finite vertices, stored as an (n, 2) float64 array."""

    vertices: np.ndarray

    def __post_init__(self):
        arr = np.array(self.vertices, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(f"vertices must have shape (n, 2), got {arr.shape}")
        if arr.shape[0] < 3:
            raise ValueError(f"a polygon needs at least 3 vertices, got {arr.shape[0]}")
        if not np.isfinite(arr).all():
            raise ValueError("polygon coordinates must be finite")
        object.__setattr__(self, "vertices", _frozen(arr))

    @property
    def n(self) -> int:
        return self.vertices.shape[0]

    def points(self) -> list[Point2]:
        return [Point2(float(x), float(y)) for x, y in self.vertices]


@dataclass(frozen=True, eq=False)
class PolygonBatch:
    """Padded instance batch: (count, max_vertices, 2) coords plus validity mask."""

    coords: np.ndarray
    validity: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        validity = np.array(self.validity, dtype=np.uint8)
        if coords.ndim != 3 or coords.shape[2] != 2:
            raise ValueError(f"coords must have shape (count, max_vertices, 2), got {coords.shape}")
        if validity.shape != coords.shape[:2]:
            raise ValueError(f"validity shape {validity.shape} does not match coords {coords.shape}")
        if not np.isfinite(coords).all():
            raise ValueError("batch coordinates must be finite")
        counts = validity.sum(axis=1)
        if (counts < 3).any():
            raise ValueError("every instance needs at least 3 valid vertices")
        # validity rows must be a prefix of ones
        expected = (np.arange(validity.shape[1])[None, :] < counts[:, None]).astype(np.uint8)
        if not np.array_equal(validity, expected):
            raise ValueError("validity rows must be 1 for the leading vertices and 0 after")
        if (coords[validity == 0] != 0).any():
            raise ValueError("padded coordinates must be zero")
        object.__setattr__(self, "coords", _frozen(coords))
        object.__setattr__(self, "validity", _frozen(validity))

    @property
    def count(self) -> int:
        return self.coords.shape[0]

    @property
    def max_vertices(self) -> int:
        return self.coords.shape[1]

    @property
    def vertex_counts(self) -> np.ndarray:
        return self.validity.sum(axis=1).astype(np.int64)

    def instance(self, i: int) -> Polygon:
        n = int(self.vertex_counts[i])
        return Polygon(self.coords[i, :n])


@dataclass(frozen=True, eq=False)
class RasterMask:
    """Binary occupancy grid, row-major, one byte per pixel."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.uint8)
        if px.shape != (self.height, self.width):
            raise ValueError(f"pixels shape {px.shape} does not match {self.height}x{self.width}")
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def count(self) -> int:
        return int(self.pixels.sum())


def centroid(poly: Polygon, mode: str = AREA) -> Point2:
    """Polygon centroid: shoelace area centroid, or the plain vertex mean.

    In ``area`` mode a ring with |area| < DEGENERATE_AREA falls back to the
    vertex mean so degenerate fixtures stay well-defined.
    """
    if mode not in CENTROID_MODES:
        raise ValueError(f"unknown centroid mode {mode!r}")
    v = poly.vertices
    if mode == AREA:
        x, y = v[:, 0], v[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        area2 = cross.sum()
        if abs(area2) >= 2.0 * DEGENERATE_AREA:
            cx = ((x + xn) * cross).sum() / (3.0 * area2)
            cy = ((y + yn) * cross).sum() / (3.0 * area2)
            return Point2(float(cx), float(cy))
    mean = v.mean(axis=0)
    return Point2(float(mean[0]), float(mean[1]))


def translate(poly: Polygon, off: OffsetVec) -> Polygon:
    """Shift every vertex by ``off``; vertex order is preserved."""
    return Polygon(poly.vertices + off.as_array())


def rasterize(poly: Polygon, width: int, height: int) -> RasterMask:
    """Rasterize onto a width x height grid; parts outside the grid are clipped."""
    if width <= 0 or height <= 0:
        raise ValueError(f"raster dimensions must be positive, got {width}x{height}")
    xs = np.ascontiguousarray(poly.vertices[:, 0])
    ys = np.ascontiguousarray(poly.vertices[:, 1])
    return RasterMask(width, height, fill_mask(xs, ys, int(width), int(height)))


def pad_batch(polys: list[Polygon]) -> PolygonBatch:
    """Pack polygons into a padded matrix with a leading-ones validity mask."""
    if not polys:
        raise ValueError("empty batch")
    counts = [p.n for p in polys]
    l = max(counts)
    m = len(polys)
    coords = np.zeros((m, l, 2), dtype=np.float64)
    validity = np.zeros((m, l), dtype=np.uint8)
    for i, p in enumerate(polys):
        coords[i, :p.n] = p.vertices
        validity[i, :p.n] = 1
    return PolygonBatch(coords, validity)


def unpad_batch(batch: PolygonBatch) -> list[Polygon]:
    """Inverse of :func:`pad_batch`; recovers the input polygons exactly."""
    return [batch.instance(i) for i in range(batch.count)]


def translate_batch(batch: PolygonBatch, offsets: np.ndarray) -> PolygonBatch:
    """Rigidly shift each instance by its own (dx, dy); padding stays zero."""
    off = np.asarray(offsets, dtype=np.float64)
    if off.shape != (batch.count, 2):
        raise ValueError(f"offsets must have shape ({batch.count}, 2), got {off.shape}")
    coords = (batch.coords + off[:, None, :]) * batch.validity[:, :, None]
    return PolygonBatch(coords, batch.validity)


def batch_centroids(batch: PolygonBatch, mode: str = AREA) -> np.ndarray:
    """Per-instance centroids as an (m, 2) array; same rules as :func:`centroid`."""
    if mode not in CENTROID_MODES:
        raise ValueError(f"unknown centroid mode {mode!r}")
    counts = batch.vertex_counts
    valid = batch.validity.astype(bool)
    x = batch.coords[:, :, 0]
    y = batch.coords[:, :, 1]
    means = np.stack([
        (x * valid).sum(axis=1) / counts,
        (y * valid).sum(axis=1) / counts,
    ], axis=1)
    if mode == VERTEX_MEAN:
        return means
    idx = np.arange(batch.max_vertices)
    nxt = np.where(idx[None, :] + 1 < counts[:, None], idx[None, :] + 1, 0)
    xn = np.take_along_axis(x, nxt, axis=1)
    yn = np.take_along_axis(y, nxt, axis=1)
    cross = (x * yn - xn * y) * valid
    area2 = cross.sum(axis=1)
    degenerate = np.abs(area2) < 2.0 * DEGENERATE_AREA
    safe = np.where(degenerate, 1.0, area2)
    cx = ((x + xn) * cross).sum(axis=1) / (3.0 * safe)
    cy = ((y + yn) * cross).sum(axis=1) / (3.0 * safe)
    out = np.stack([cx, cy], axis=1)
    out[degenerate] = means[degenerate]
    return out
