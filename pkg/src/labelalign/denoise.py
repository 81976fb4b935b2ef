"""Iterative footprint denoising, one-step roof lifting, TTA, and convergence analysis.

The engine iterates ``position_t = position_{t-1} + w_t * predicted_offset_t``
with exponential step weights ``w_t = delta**(t-1)``. Offsets are applied
rigidly (whole-polygon translation). To keep the accumulation identity exact
in float arithmetic, positions are materialized as
``initial + cumulative_t`` where ``cumulative_t`` is the left-to-right sum
of weighted offsets in step order; the recorded trajectory therefore
satisfies ``final == initial + sum_t w_t * offset_t`` bit-for-bit when the
sum is taken in the same order.

Instances whose predictor call fails (e.g. an empty correlation stencil) are
flagged and frozen at their current position; the run continues for the
rest of the batch.
"""
import math
from dataclasses import dataclass

import numpy as np

from ._rng import TTA_STREAM, keyed_rng
from .geometry import PolygonBatch, batch_centroids, translate_batch
from .predictor import Predictor, PredictorContext

TTA_NONE = "none"
TTA_T1 = "t1"
TTA_T15 = "t1_5"
TTA_STRATEGIES = (TTA_NONE, TTA_T1, TTA_T15)

# Convergence is declared when running window means move less than this
# relative spread over the last half of the analyzed steps.
STABILITY_TOL = 0.05


@dataclass(frozen=True)
class Schedule:
    """Exponential step weights delta**(t-1) for t = 1..steps."""

    delta: float
    steps: int

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise ValueError(f"delta must be finite and positive, got {self.delta}")
        if not (isinstance(self.steps, int) and self.steps >= 1):
            raise ValueError(f"steps must be an integer >= 1, got {self.steps}")
        if not np.isfinite(self.delta ** (self.steps - 1)):
            raise ValueError("schedule weights overflow")

    def weights(self) -> np.ndarray:
        return self.delta ** np.arange(self.steps, dtype=np.float64)


def energy(delta: float, steps: int) -> float:
    """Sum of the step weights: (1 - delta**T) / (1 - delta), or T at delta = 1."""
    if not (np.isfinite(delta) and delta > 0):
        raise ValueError(f"delta must be finite and positive, got {delta}")
    if not (isinstance(steps, int) and steps >= 1):
        raise ValueError(f"steps must be an integer >= 1, got {steps}")
    if delta == 1.0:
        return float(steps)
    return (1.0 - delta**steps) / (1.0 - delta)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded denoising run.

    ``raw_offsets[t-1]`` is the pre-scaling predictor output at step t;
    ``cumulative[t]`` the left-to-right sum of weighted offsets after step t
    (``cumulative[0]`` is zero); ``centroids[t]`` the per-instance centroid
    track ``centroids[0] + cumulative[t]``. ``positions`` holds the batch
    snapshot per step when recorded. ``truth_centroids`` is carried along
    when the context exposes hidden truth, enabling per-step error series.
    """

    weights: np.ndarray            # (T,)
    raw_offsets: np.ndarray        # (T, m, 2)
    cumulative: np.ndarray         # (T+1, m, 2)
    centroids: np.ndarray          # (T+1, m, 2)
    flagged: np.ndarray            # (m,) bool
    notes: tuple[str, ...]
    positions: list[PolygonBatch] | None = None
    truth_centroids: np.ndarray | None = None

    @property
    def steps(self) -> int:
        return self.weights.shape[0]

    @property
    def count(self) -> int:
        return self.raw_offsets.shape[1]

    def mean_epe_series(self, truth: np.ndarray | None = None) -> np.ndarray:
        """Mean distance of the centroid track to the truth, per step 0..T."""
        ref = self.truth_centroids if truth is None else np.asarray(truth, dtype=np.float64)
        if ref is None:
            raise ValueError("no truth centroids available for an error series")
        return np.linalg.norm(self.centroids - ref[None, :, :], axis=2).mean(axis=1)


@dataclass(frozen=True)
class ConvergenceReport:
    """Oscillation diagnostics for a (near-)constant-step run.

    ``window_means[k]`` is the running mean of normalized squared step
    energies over steps window_start..window_start+k. ``converged`` records
    whether those means moved less than ``stability_tol`` (relative) over the
    last half of the steps; ``stationary_radius`` is the mean distance to
    truth averaged over that same tail (nan without truth).
    """

    energy: float
    window_start: int
    window_means: tuple[float, ...]
    mean_epe: tuple[float, ...]
    converged: bool
    relative_spread: float
    stationary_radius: float
    stability_tol: float = STABILITY_TOL


def denoise_footprint(ctx: PredictorContext, batch: PolygonBatch, predictor: Predictor,
                      schedule: Schedule, record_positions: bool = True,
                      step_base: int = 0) -> tuple[PolygonBatch, Trajectory]:
    """Run the multi-step correction loop; returns the final batch and trajectory."""
    weights = schedule.weights()
    m = batch.count
    cum = np.zeros((m, 2))
    cumulative = [cum]
    raw = []
    frozen = np.zeros(m, dtype=bool)
    notes = [""] * m
    current = batch
    positions = [batch] if record_positions else None
    start_centroids = batch_centroids(batch)
    centroids = [start_centroids]
    truth = None
    if ctx.hidden_truth is not None and ctx.hidden_truth.footprint_centroids.shape[0] == m:
        truth = ctx.hidden_truth.footprint_centroids
    for t in range(1, schedule.steps + 1):
        pred = predictor.predict_footprint(ctx, current, step_index=step_base + t)
        for i in np.nonzero(pred.flagged & ~frozen)[0]:
            notes[i] = pred.notes[i] or "predictor_failure"
        frozen |= pred.flagged
        step_off = np.array(pred.offsets, dtype=np.float64)
        step_off[frozen] = 0.0
        raw.append(step_off)
        cum = cum + weights[t - 1] * step_off
        cumulative.append(cum)
        current = translate_batch(batch, cum)
        if record_positions:
            positions.append(current)
        centroids.append(start_centroids + cum)
    traj = Trajectory(
        weights=weights,
        raw_offsets=np.stack(raw),
        cumulative=np.stack(cumulative),
        centroids=np.stack(centroids),
        flagged=frozen,
        notes=tuple(notes),
        positions=positions,
        truth_centroids=None if truth is None else truth.copy(),
    )
    return current, traj


@dataclass(frozen=True, eq=False)
class RoofLift:
    """One-step roof estimate: lifted batch, per-instance offsets and heights."""

    roofs: PolygonBatch
    offsets: np.ndarray   # (m, 2)
    heights: np.ndarray   # (m,) offset norms, a relative-height proxy
    flagged: np.ndarray   # (m,) bool
    notes: tuple[str, ...]


def lift_to_roof(ctx: PredictorContext, footprints: PolygonBatch, predictor: Predictor,
                 frozen: np.ndarray | None = None) -> RoofLift:
    """Predict the footprint->roof offset once and apply it rigidly."""
    pred = predictor.predict_roof(ctx, footprints)
    flagged = pred.flagged.copy()
    notes = list(pred.notes)
    if frozen is not None:
        flagged |= frozen
    offsets = np.array(pred.offsets, dtype=np.float64)
    offsets[flagged] = 0.0
    roofs = translate_batch(footprints, offsets)
    heights = np.linalg.norm(offsets, axis=1)
    offsets.flags.writeable = False
    heights.flags.writeable = False
    return RoofLift(roofs, offsets, heights, flagged, tuple(notes))


@dataclass(frozen=True)
class TTAConfig:
    strategy: str = TTA_NONE
    runs: int = 4
    extra_steps: int = 5
    perturb_sigma: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in TTA_STRATEGIES:
            raise ValueError(f"strategy must be one of {TTA_STRATEGIES}, got {self.strategy!r}")
        if self.strategy == TTA_T1 and self.runs < 1:
            raise ValueError(f"t1 needs runs >= 1, got {self.runs}")
        if self.strategy == TTA_T15 and self.extra_steps < 1:
            raise ValueError(f"t1_5 needs extra_steps >= 1, got {self.extra_steps}")
        if not (np.isfinite(self.perturb_sigma) and self.perturb_sigma >= 0.0):
            raise ValueError(f"perturb_sigma must be finite and non-negative, got {self.perturb_sigma}")


def _mean_batches(batches: list[PolygonBatch]) -> PolygonBatch:
    coords = np.mean([b.coords for b in batches], axis=0)
    coords = coords * batches[0].validity[:, :, None]
    return PolygonBatch(coords, batches[0].validity)


def tta_t1(ctx: PredictorContext, batch: PolygonBatch, predictor: Predictor,
           schedule: Schedule, cfg: TTAConfig) -> PolygonBatch:
    """Perturb-and-rerun averaging: chain runs, average the run endpoints.

    Run 1 starts from the input; each later run starts from the previous
    endpoint plus a rigid Gaussian perturbation. Oracle-style predictors see
    a distinct step index per run, so their noise streams stay independent.
    """
    endpoints = []
    start = batch
    for k in range(cfg.runs):
        final, _ = denoise_footprint(ctx, start, predictor, schedule,
                                     record_positions=False, step_base=k * schedule.steps)
        endpoints.append(final)
        if k + 1 < cfg.runs:
            pert = np.empty((batch.count, 2))
            for i in range(batch.count):
                rng = keyed_rng(cfg.seed, TTA_STREAM, k, i)
                pert[i] = rng.normal(0.0, cfg.perturb_sigma, 2)
            start = translate_batch(final, pert)
    return _mean_batches(endpoints)


def tta_t15(ctx: PredictorContext, batch: PolygonBatch, predictor: Predictor,
            schedule: Schedule, cfg: TTAConfig) -> PolygonBatch:
    """Post-convergence averaging: continue the schedule, average the extra steps.

    The run is extended to steps + extra_steps with the same exponential
    weight law; the output averages the positions at steps T+1..T+extra.
    """
    extended = Schedule(schedule.delta, schedule.steps + cfg.extra_steps)
    _, traj = denoise_footprint(ctx, batch, predictor, extended, record_positions=True)
    tail = traj.positions[schedule.steps + 1:]
    return _mean_batches(tail)


def analyze_oscillation(trajectory: Trajectory, schedule: Schedule, window_start: int,
                        truth: np.ndarray | None = None) -> ConvergenceReport:
    """Windowed step-energy and terminal-radius diagnostics of one run.

    Normalized squared step energies ``w_t^2 * mean|offset_t|^2 / nu2`` are
    averaged in running windows from ``window_start``; ``nu2`` is the
    per-axis variance estimate taken from the first step's offsets (the
    first prediction approximates the full initial displacement). Stabilized
    window means indicate the run has reached the stationary oscillation
    around its fixed point rather than continuing to converge.
    """
    steps = trajectory.steps
    if steps <= window_start:
        raise ValueError(f"need more steps than window_start, got {steps} <= {window_start}")
    if window_start < 1:
        raise ValueError(f"window_start must be >= 1, got {window_start}")
    sq = (trajectory.raw_offsets ** 2).sum(axis=2).mean(axis=1)        # (T,) mean |offset|^2
    step_energy = trajectory.weights**2 * sq
    nu2 = sq[0] / 2.0
    if nu2 <= 0.0:
        nu2 = 1.0
    normed = step_energy / nu2
    window_means = np.cumsum(normed[window_start - 1:]) / np.arange(1, steps - window_start + 2)
    half = max(1, (steps - window_start + 1) // 2)
    tail = window_means[-half:]
    center = np.abs(tail).mean()
    spread = float((tail.max() - tail.min()) / center) if center > 0 else 0.0
    converged = spread < STABILITY_TOL

    ref = truth if truth is not None else trajectory.truth_centroids
    if ref is not None:
        epe = trajectory.mean_epe_series(ref)
        radius = float(epe[-half:].mean())
        epe_out = tuple(float(v) for v in epe)
    else:
        radius = math.nan
        epe_out = ()
    return ConvergenceReport(
        energy=energy(schedule.delta, schedule.steps),
        window_start=window_start,
        window_means=tuple(float(v) for v in window_means),
        mean_epe=epe_out,
        converged=converged,
        relative_spread=spread,
        stationary_radius=radius,
    )
