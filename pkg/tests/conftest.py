"""Shared fixtures: the seed-42 fixture dataset and brute-force oracles."""
import numpy as np
import pytest

from labelalign import synth
from labelalign.geometry import Polygon


def point_in_polygon(px: float, py: float, verts: np.ndarray) -> bool:
    """Independent even-odd crossing test used as the rasterization oracle.

    Same boundary convention as the library: an edge counts iff
    min(y1, y2) <= py < max(y1, y2) and px is strictly left of the
    intersection with the horizontal line through (px, py).
    """
    inside = False
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        if (y1 > py) != (y2 > py):
            if px < x1 + ((py - y1) * (x2 - x1)) / (y2 - y1):
                inside = not inside
    return inside


def brute_force_mask(poly: Polygon, width: int, height: int) -> np.ndarray:
    """Exhaustive pixel-center point-in-polygon rasterization."""
    out = np.zeros((height, width), dtype=np.uint8)
    for j in range(height):
        for i in range(width):
            if point_in_polygon(i + 0.5, j + 0.5, poly.vertices):
                out[j, i] = 1
    return out


def random_rectilinear(rng: np.random.Generator, lo: float = 2.0, hi: float = 50.0) -> Polygon:
    """Random axis-aligned rectangle or L-shape, fractional coordinates allowed."""
    w = rng.uniform(4.0, 20.0)
    h = rng.uniform(4.0, 20.0)
    x0 = rng.uniform(lo, hi - w)
    y0 = rng.uniform(lo, hi - h)
    if rng.random() < 0.5:
        verts = [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h)]
    else:
        nw = w * rng.uniform(0.25, 0.75)
        nh = h * rng.uniform(0.25, 0.75)
        verts = [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h - nh),
                 (x0 + w - nw, y0 + h - nh), (x0 + w - nw, y0 + h), (x0, y0 + h)]
    return Polygon(np.array(verts))


def random_triangle(rng: np.random.Generator, lo: float = -4.0, hi: float = 60.0) -> Polygon:
    while True:
        verts = rng.uniform(lo, hi, (3, 2))
        # reject near-degenerate triangles; the oracle handles them but they
        # test nothing beyond the sliver case covered explicitly
        a, b = verts[1] - verts[0], verts[2] - verts[0]
        area2 = abs(a[0] * b[1] - a[1] * b[0])
        if area2 > 1.0:
            return Polygon(verts)


def random_polygon(rng: np.random.Generator) -> Polygon:
    """Random simple-ish star polygon for batching tests."""
    n = int(rng.integers(3, 9))
    angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, n))
    radii = rng.uniform(2.0, 12.0, n)
    cx, cy = rng.uniform(15.0, 40.0, 2)
    verts = np.stack([cx + radii * np.cos(angles), cy + radii * np.sin(angles)], axis=1)
    return Polygon(verts)


@pytest.fixture(scope="session")
def fixture_dataset(tmp_path_factory):
    """The seed-42 synthetic fixture: 3 images, 4 buildings each."""
    out = tmp_path_factory.mktemp("fixture") / "seed42"
    cfg = synth.SceneConfig(n_buildings=4, seed=42)
    synth.build_dataset(cfg, 3, out)
    return out
