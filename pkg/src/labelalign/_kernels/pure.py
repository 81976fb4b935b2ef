"""Numpy fallback implementations of the hot kernels.

Both kernels are bit-identical to the compiled versions in ``_core.pyx``:

* ``fill_mask`` evaluates the same even-odd parity rule on pixel centers,
  computing edge intersections with the identical float64 expression
  ``x1 + ((y - y1) * (x2 - x1)) / (y2 - y1)``, so the set-pixel decisions
  match the compiled scanline fill exactly.
* ``window_scores`` accumulates integer sums of uint8 evidence, which are
  order-independent, so scores match the compiled loop exactly.
"""
import numpy as np

_CHUNK = 2048


def fill_mask(xs: np.ndarray, ys: np.ndarray, width: int, height: int) -> np.ndarray:
    """Even-odd rasterization of a closed ring onto pixel centers.

    Pixel (i, j) is set iff its center (i + 0.5, j + 0.5) is inside the ring:
    an edge contributes a crossing iff min(y1, y2) <= yc < max(y1, y2) and
    xc is strictly left of the edge's intersection with the center row.
    """
    out = np.zeros((height, width), dtype=np.uint8)
    x1 = np.asarray(xs, dtype=np.float64)
    y1 = np.asarray(ys, dtype=np.float64)
    x2 = np.roll(x1, -1)
    y2 = np.roll(y1, -1)

    # Pixels outside the (padded) bounding box can never be inside.
    j0 = max(0, int(np.floor(y1.min())) - 1)
    j1 = min(height, int(np.ceil(y1.max())) + 1)
    i0 = max(0, int(np.floor(x1.min())) - 1)
    i1 = min(width, int(np.ceil(x1.max())) + 1)
    if j0 >= j1 or i0 >= i1:
        return out

    yc = np.arange(j0, j1, dtype=np.float64) + 0.5
    crosses = (y1[:, None] > yc[None, :]) != (y2[:, None] > yc[None, :])
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        xint = x1[:, None] + ((yc[None, :] - y1[:, None]) * (x2 - x1)[:, None]) / (y2 - y1)[:, None]

    xc = np.arange(i0, i1, dtype=np.float64) + 0.5
    hits = crosses[:, :, None] & (xc[None, None, :] < xint[:, :, None])
    out[j0:j1, i0:i1] = (hits.sum(axis=0, dtype=np.int64) & 1).astype(np.uint8)
    return out


def window_scores(channel: np.ndarray, rows: np.ndarray, cols: np.ndarray, radius: int) -> np.ndarray:
    """Integer overlap sums of a pixel stencil over all shifts in a square window.

    ``scores[dv + radius, du + radius]`` is the sum of ``channel`` (uint8) over
    the stencil pixels shifted by (du, dv); shifted samples falling outside the
    image contribute zero. Stencil pixels themselves must lie inside the image
    (rasterization guarantees that).
    """
    h, w = channel.shape
    side = 2 * radius + 1
    padded = np.zeros((h + 2 * radius, w + 2 * radius), dtype=np.int64)
    padded[radius:radius + h, radius:radius + w] = channel
    off = np.arange(side)
    scores = np.zeros((side, side), dtype=np.int64)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    for start in range(0, rows.shape[0], _CHUNK):
        r = rows[start:start + _CHUNK]
        c = cols[start:start + _CHUNK]
        scores += padded[r[:, None, None] + off[None, :, None],
                         c[:, None, None] + off[None, None, :]].sum(axis=0)
    return scores
