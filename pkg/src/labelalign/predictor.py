"""Pluggable offset predictors and alignment-loss diagnostics.

Two realizations of the per-instance offset-prediction contract are
provided. The stochastic oracle predicts a fixed fraction of the true
remaining displacement plus isotropic Gaussian noise; it needs hidden
ground-truth centroids and models an idealized aligner whose prediction
quality is controlled directly. The correlation matcher is image-
conditioned: it rasterizes each instance into a pixel stencil and
exhaustively scores integer shifts of that stencil against an evidence
channel inside a square search window.

Correlation scores are computed on evidence quantized to 8 bits (the same
precision the channel files store), which makes them integer-exact: ranking
and tie-breaks cannot depend on float summation order or on the kernel
backend.

A predictor is anything with the two methods of :class:`Predictor`:
footprint-conditioned prediction (per denoising step) and roof-conditioned
prediction (one step).
"""
import math
from dataclasses import dataclass
from typing import Mapping, Protocol

import numpy as np

from ._kernels import window_scores
from ._rng import ORACLE_STREAM, ROOF_STEP, keyed_rng
from .codec import OffsetVec
from .geometry import PolygonBatch, batch_centroids, rasterize

FOOTPRINT_CHANNEL = "footprint_evidence"
ROOF_CHANNEL = "roof_evidence"

OVERLAP_SUM = "overlap_sum"
NORMALIZED_OVERLAP = "normalized_overlap"
SCORE_MODES = (OVERLAP_SUM, NORMALIZED_OVERLAP)

FOOTPRINT = "footprint"
ROOF = "roof"

# Instance flag notes
EMPTY_STENCIL = "empty_stencil"
WINDOW_EDGE = "window_edge"


@dataclass(frozen=True, eq=False)
class HiddenTruth:
    """Ground-truth centroids the oracle may peek at; (m, 2) arrays."""

    footprint_centroids: np.ndarray
    roof_centroids: np.ndarray

    def __post_init__(self):
        fc = np.array(self.footprint_centroids, dtype=np.float64)
        rc = np.array(self.roof_centroids, dtype=np.float64)
        if fc.ndim != 2 or fc.shape[1] != 2 or rc.shape != fc.shape:
            raise ValueError("truth centroids must be matching (m, 2) arrays")
        if not (np.isfinite(fc).all() and np.isfinite(rc).all()):
            raise ValueError("truth centroids must be finite")
        fc.flags.writeable = False
        rc.flags.writeable = False
        object.__setattr__(self, "footprint_centroids", fc)
        object.__setattr__(self, "roof_centroids", rc)


@dataclass(frozen=True, eq=False)
class PredictorContext:
    """Read-only prediction context: evidence channels plus optional hidden truth.

    ``channels`` maps layer names to (height, width) float arrays in [0, 1].
    The oracle never reads channels; the correlation matcher never reads
    ``hidden_truth``.
    """

    width: int
    height: int
    channels: Mapping[str, np.ndarray]
    hidden_truth: HiddenTruth | None = None

    def __post_init__(self):
        frozen = {}
        for name, ch in self.channels.items():
            arr = np.array(ch, dtype=np.float64)
            if arr.shape != (self.height, self.width):
                raise ValueError(
                    f"channel {name!r} has shape {arr.shape}, expected ({self.height}, {self.width})"
                )
            if not np.isfinite(arr).all() or arr.min() < 0.0 or arr.max() > 1.0:
                raise ValueError(f"channel {name!r} must hold finite values in [0, 1]")
            arr.flags.writeable = False
            frozen[name] = arr
        object.__setattr__(self, "channels", frozen)


@dataclass(frozen=True)
class OraclePredictorParams:
    kappa: float = 1.0
    rho: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.kappa) and 0.0 <= self.kappa <= 1.0):
            raise ValueError(f"kappa must be in [0, 1], got {self.kappa}")
        if not (np.isfinite(self.rho) and self.rho >= 0.0):
            raise ValueError(f"rho must be finite and non-negative, got {self.rho}")


@dataclass(frozen=True)
class CorrelationParams:
    search_radius: int = 32
    target_channel: str = FOOTPRINT_CHANNEL
    score: str = NORMALIZED_OVERLAP

    def __post_init__(self):
        if not (isinstance(self.search_radius, int) and self.search_radius >= 1):
            raise ValueError(f"search_radius must be an integer >= 1, got {self.search_radius}")
        if self.score not in SCORE_MODES:
            raise ValueError(f"score must be one of {SCORE_MODES}, got {self.score!r}")


@dataclass(frozen=True, eq=False)
class OffsetPrediction:
    """Per-instance offsets (m, 2), scores (m,), failure flags, and notes."""

    offsets: np.ndarray
    scores: np.ndarray
    flagged: np.ndarray
    notes: tuple[str, ...]

    def __post_init__(self):
        off = np.array(self.offsets, dtype=np.float64)
        sc = np.array(self.scores, dtype=np.float64)
        fl = np.array(self.flagged, dtype=bool)
        m = off.shape[0]
        if off.shape != (m, 2) or sc.shape != (m,) or fl.shape != (m,) or len(self.notes) != m:
            raise ValueError("prediction arrays must share one entry per instance")
        if not (np.isfinite(off).all() and np.isfinite(sc).all()):
            raise ValueError("prediction values must be finite")
        off.flags.writeable = False
        sc.flags.writeable = False
        fl.flags.writeable = False
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "scores", sc)
        object.__setattr__(self, "flagged", fl)

    def offset(self, i: int) -> OffsetVec:
        return OffsetVec(float(self.offsets[i, 0]), float(self.offsets[i, 1]))


class Predictor(Protocol):
    def predict_footprint(self, ctx: PredictorContext, batch: PolygonBatch,
                          step_index: int) -> OffsetPrediction: ...

    def predict_roof(self, ctx: PredictorContext, batch: PolygonBatch) -> OffsetPrediction: ...


def oracle_predict(ctx: PredictorContext, batch: PolygonBatch, params: OraclePredictorParams,
                   step_index: int, target: str = FOOTPRINT) -> OffsetPrediction:
    """Predict kappa * (truth - current centroid) + Gaussian(rho) per instance.

    Noise is keyed per (seed, step_index, instance), so predictions are
    deterministic and independent of scheduling order.
    """
    if ctx.hidden_truth is None:
        raise ValueError("oracle requires ground truth")
    truth = (ctx.hidden_truth.footprint_centroids if target == FOOTPRINT
             else ctx.hidden_truth.roof_centroids)
    if truth.shape[0] != batch.count:
        raise ValueError(f"truth holds {truth.shape[0]} instances, batch holds {batch.count}")
    current = batch_centroids(batch)
    offsets = params.kappa * (truth - current)
    if params.rho > 0.0:
        noise = np.empty((batch.count, 2))
        for i in range(batch.count):
            rng = keyed_rng(params.seed, ORACLE_STREAM, step_index, i)
            noise[i] = rng.normal(0.0, params.rho, 2)
        offsets = offsets + noise
    scores = np.ones(batch.count)
    flagged = np.zeros(batch.count, dtype=bool)
    return OffsetPrediction(offsets, scores, flagged, ("",) * batch.count)


def _stencil(batch: PolygonBatch, i: int, width: int, height: int):
    mask = rasterize(batch.instance(i), width, height)
    rows, cols = np.nonzero(mask.pixels)
    return rows.astype(np.int64), cols.astype(np.int64)


def _best_shift(scores: np.ndarray, radius: int) -> tuple[int, int]:
    """Argmax with ties broken by smallest shift norm, then lexicographic (du, dv)."""
    best = scores.max()
    cand = np.argwhere(scores == best)
    dv = cand[:, 0] - radius
    du = cand[:, 1] - radius
    order = np.lexsort((dv, du, du * du + dv * dv))
    k = order[0]
    return int(du[k]), int(dv[k])


def correlate_predict(ctx: PredictorContext, batch: PolygonBatch,
                      params: CorrelationParams) -> OffsetPrediction:
    """Exhaustive integer-shift template match of each instance against a channel.

    Returns, per instance, the in-window shift maximizing the stencil/evidence
    overlap. Instances whose stencil rasterizes to nothing (fully outside the
    image) are flagged and left in place; a best shift on the window border is
    annotated ``window_edge`` but is not a failure.
    """
    if params.target_channel not in ctx.channels:
        raise ValueError(f"context has no channel {params.target_channel!r}")
    channel = ctx.channels[params.target_channel]
    quantized = np.ascontiguousarray(np.rint(channel * 255.0).astype(np.uint8))
    r = params.search_radius
    m = batch.count
    offsets = np.zeros((m, 2))
    scores = np.zeros(m)
    flagged = np.zeros(m, dtype=bool)
    notes = [""] * m
    for i in range(m):
        rows, cols = _stencil(batch, i, ctx.width, ctx.height)
        if rows.size == 0:
            flagged[i] = True
            notes[i] = EMPTY_STENCIL
            continue
        grid = window_scores(quantized, rows, cols, r)
        du, dv = _best_shift(grid, r)
        offsets[i] = (du, dv)
        raw = int(grid[dv + r, du + r])
        if params.score == OVERLAP_SUM:
            scores[i] = raw / 255.0
        else:
            scores[i] = raw / (255.0 * rows.size)
        if max(abs(du), abs(dv)) == r:
            notes[i] = WINDOW_EDGE
    return OffsetPrediction(offsets, scores, flagged, tuple(notes))


class OraclePredictor:
    """Predictor interface around :func:`oracle_predict`."""

    def __init__(self, params: OraclePredictorParams):
        self.params = params

    def predict_footprint(self, ctx, batch, step_index):
        return oracle_predict(ctx, batch, self.params, step_index, target=FOOTPRINT)

    def predict_roof(self, ctx, batch):
        return oracle_predict(ctx, batch, self.params, ROOF_STEP, target=ROOF)


class CorrelationPredictor:
    """Predictor interface around :func:`correlate_predict`.

    Footprint predictions match against the footprint evidence channel, roof
    predictions against the roof evidence channel.
    """

    def __init__(self, search_radius: int = 32, score: str = NORMALIZED_OVERLAP):
        self.search_radius = search_radius
        self.score = score

    def _params(self, channel: str) -> CorrelationParams:
        return CorrelationParams(self.search_radius, channel, self.score)

    def predict_footprint(self, ctx, batch, step_index):
        return correlate_predict(ctx, batch, self._params(FOOTPRINT_CHANNEL))

    def predict_roof(self, ctx, batch):
        return correlate_predict(ctx, batch, self._params(ROOF_CHANNEL))


def smooth_l1(pred: OffsetVec, target: OffsetVec) -> float:
    """Summed per-component smooth L1: 0.5 e^2 below |e| = 1, |e| - 0.5 above."""
    total = 0.0
    for e in (pred.dx - target.dx, pred.dy - target.dy):
        a = abs(e)
        total += 0.5 * e * e if a < 1.0 else a - 0.5
    return total


def alignment_loss(pred_f: OffsetVec, target_f: OffsetVec,
                   pred_o: OffsetVec, target_o: OffsetVec, gamma: float = 0.1) -> float:
    """Scaled sum of the footprint and roof smooth-L1 terms."""
    if not (math.isfinite(gamma) and gamma >= 0.0):
        raise ValueError(f"gamma must be finite and non-negative, got {gamma}")
    return gamma * (smooth_l1(pred_f, target_f) + smooth_l1(pred_o, target_o))
