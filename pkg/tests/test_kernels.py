"""Backend equivalence: the compiled kernels must match the numpy fallback bit-for-bit."""
import subprocess
import sys

import numpy as np
import pytest

from labelalign._kernels import available_backends, get_backend

HAS_COMPILED = "compiled" in available_backends()

needs_compiled = pytest.mark.skipif(not HAS_COMPILED, reason="compiled kernels unavailable")


def random_ring(rng, n_max=9, span=40.0):
    n = int(rng.integers(3, n_max))
    xs = np.ascontiguousarray(rng.uniform(-5.0, span, n))
    ys = np.ascontiguousarray(rng.uniform(-5.0, span, n))
    return xs, ys


@needs_compiled
def test_fill_mask_backends_identical():
    pure = get_backend("pure")
    comp = get_backend("compiled")
    rng = np.random.default_rng(100)
    for _ in range(500):
        xs, ys = random_ring(rng)
        a = pure.fill_mask(xs, ys, 36, 36)
        b = comp.fill_mask(xs, ys, 36, 36)
        assert np.array_equal(a, b)


@needs_compiled
def test_fill_mask_identical_on_pixel_boundary_geometry():
    # integer and half-integer coordinates hit the boundary rule exactly
    pure = get_backend("pure")
    comp = get_backend("compiled")
    rng = np.random.default_rng(101)
    for _ in range(300):
        n = int(rng.integers(3, 7))
        xs = np.ascontiguousarray(rng.integers(0, 24, n) * 0.5)
        ys = np.ascontiguousarray(rng.integers(0, 24, n) * 0.5)
        a = pure.fill_mask(xs, ys, 16, 16)
        b = comp.fill_mask(xs, ys, 16, 16)
        assert np.array_equal(a, b)


@needs_compiled
def test_window_scores_backends_identical():
    pure = get_backend("pure")
    comp = get_backend("compiled")
    rng = np.random.default_rng(102)
    for _ in range(30):
        h, w = (int(v) for v in rng.integers(20, 80, 2))
        channel = rng.integers(0, 256, (h, w)).astype(np.uint8)
        p = int(rng.integers(1, 400))
        rows = rng.integers(0, h, p).astype(np.int64)
        cols = rng.integers(0, w, p).astype(np.int64)
        radius = int(rng.integers(1, 12))
        a = pure.window_scores(channel, rows, cols, radius)
        b = comp.window_scores(np.ascontiguousarray(channel), rows, cols, radius)
        assert np.array_equal(a, b)


def test_window_scores_out_of_bounds_contribute_zero():
    pure = get_backend("pure")
    channel = np.full((10, 10), 7, dtype=np.uint8)
    rows = np.array([0], dtype=np.int64)
    cols = np.array([0], dtype=np.int64)
    scores = pure.window_scores(channel, rows, cols, 2)
    assert scores[2, 2] == 7        # unshifted
    assert scores[0, 0] == 0        # shifted fully outside
    assert scores[2, 0] == 0


def test_backend_env_override():
    code = ("import labelalign._kernels as k; print(k.BACKEND)")
    out = subprocess.run([sys.executable, "-c", code],
                         env={"PATH": "/usr/bin:/bin", "LABELALIGN_BACKEND": "pure"},
                         capture_output=True, text=True)
    assert out.stdout.strip() == "pure"


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        get_backend("gpu")
